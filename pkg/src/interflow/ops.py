"""Differentiable image primitives used throughout the pipeline.

All operations take channel-first tensors, shaped (B, C, H, W). Flow fields
carry two channels per direction: channel 0 is the horizontal displacement
(in pixels, positive rightwards) and channel 1 the vertical one (positive
downwards). Arbitrary float dtypes are supported; the networks run in
float32, while oracle tests drive the same code in float64.

Conventions frozen here because more than one exists in the wild:

* ``backward_warp`` samples at pixel centers and clamps out-of-bounds
  coordinates to the image edge (no zero border).
* ``bilinear_resize`` uses the pixel-center (align-corners-false) grid,
  mapping destination coordinate ``i`` to source ``(i + 0.5) * in/out - 0.5``.
  A resize to the identical size returns the input unchanged.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F

from .errors import ConfigurationError, DimensionError, NumericalError


def backward_warp(image: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """Sample ``image`` at positions displaced by ``flow``.

    ``out[y, x] = image[y + flow_y, x + flow_x]`` with bilinear interpolation
    between the four surrounding pixels and edge clamping outside the frame.
    Differentiable in both arguments. Zero flow reproduces the input
    bit-exactly.
    """
    if image.dim() != 4 or flow.dim() != 4:
        raise DimensionError(f"expected 4-d tensors, got {image.dim()}-d image and {flow.dim()}-d flow")
    if flow.shape[1] != 2:
        raise DimensionError(f"flow must have 2 channels, got {flow.shape[1]}")
    if image.shape[0] != flow.shape[0] or image.shape[2:] != flow.shape[2:]:
        raise DimensionError(f"image {tuple(image.shape)} and flow {tuple(flow.shape)} disagree on batch or spatial size")

    b, c, h, w = image.shape
    dtype, device = image.dtype, image.device
    xs = torch.arange(w, dtype=dtype, device=device).view(1, 1, 1, w)
    ys = torch.arange(h, dtype=dtype, device=device).view(1, 1, h, 1)

    cx = (xs + flow[:, 0:1]).clamp(0, w - 1)
    cy = (ys + flow[:, 1:2]).clamp(0, h - 1)

    x0 = cx.floor()
    y0 = cy.floor()
    fx = cx - x0
    fy = cy - y0
    x0 = x0.long()
    y0 = y0.long()
    x1 = (x0 + 1).clamp(max=w - 1)
    y1 = (y0 + 1).clamp(max=h - 1)

    # all four corners in a single gather
    base = y0 * w + x0
    idx = torch.cat([base, y0 * w + x1, y1 * w + x0, y1 * w + x1], dim=3)
    flat = image.reshape(b, c, h * w)
    v = flat.gather(2, idx.reshape(b, 1, -1).expand(b, c, -1)).reshape(b, c, h, 4 * w)
    v00, v01, v10, v11 = v.split(w, dim=3)

    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def conv2d(input: torch.Tensor, kernel: torch.Tensor, bias: torch.Tensor | None = None,
           stride: int = 1, padding: int = 0) -> torch.Tensor:
    """Cross-correlation with an odd square kernel and zero padding."""
    if input.dim() != 4 or kernel.dim() != 4:
        raise DimensionError("conv2d expects a 4-d input and a 4-d kernel")
    kh, kw = kernel.shape[2], kernel.shape[3]
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigurationError(f"kernel spatial size must be odd, got {kh}x{kw}")
    h, w = input.shape[2], input.shape[3]
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise DimensionError(f"kernel {kh}x{kw} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    return F.conv2d(input, kernel, bias, stride=stride, padding=padding)


def deconv2d(input: torch.Tensor, kernel: torch.Tensor, bias: torch.Tensor | None = None,
             stride: int = 2, padding: int | None = None) -> torch.Tensor:
    """Transposed convolution, the learned up-sampling operator.

    With the default padding ``(k - stride) / 2`` the output is exactly
    ``stride`` times the input size; other paddings follow the usual
    transposed-convolution size formula. ``kernel`` is laid out
    (C_in, C_out, kh, kw).
    """
    if input.dim() != 4 or kernel.dim() != 4:
        raise DimensionError("deconv2d expects a 4-d input and a 4-d kernel")
    k = kernel.shape[2]
    if kernel.shape[3] != k:
        raise ConfigurationError("deconv2d kernel must be square")
    if padding is None:
        if (k - stride) % 2 != 0 or k < stride:
            raise ConfigurationError(
                f"kernel size {k} and stride {stride} admit no symmetric padding with output = stride * input")
        padding = (k - stride) // 2
    return F.conv_transpose2d(input, kernel, bias, stride=stride, padding=padding)


def prelu(x: torch.Tensor, slope: torch.Tensor) -> torch.Tensor:
    """y = x for x >= 0, slope * x otherwise; slope is per-channel (dim 1) or scalar."""
    return F.prelu(x, slope)


def resize_to(image: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinear resample to an explicit (height, width), pixel-center grid.

    Destination sample i maps to source coordinate (i + 0.5) * in/out - 0.5,
    clamped to the frame, and blends the two nearest source samples per
    axis. Identity when the size already matches.
    """
    if image.dim() != 4:
        raise DimensionError("resize_to expects a 4-d tensor")
    oh, ow = size
    if oh < 1 or ow < 1:
        raise DimensionError(f"target size {size} must be at least 1x1")
    if (oh, ow) == tuple(image.shape[2:]):
        return image
    return F.interpolate(image, size=(oh, ow), mode="bilinear",
                         align_corners=False, antialias=False)


def bilinear_resize(image: torch.Tensor, scale: float) -> torch.Tensor:
    """Resize by a positive factor; output size is round(scale * size)."""
    if scale <= 0:
        raise DimensionError(f"scale must be positive, got {scale}")
    h, w = image.shape[2], image.shape[3]
    oh = int(scale * h + 0.5)
    ow = int(scale * w + 0.5)
    if oh < 1 or ow < 1:
        raise DimensionError(f"scale {scale} collapses {h}x{w} below one pixel")
    return resize_to(image, (oh, ow))


def flow_rescale(flow: torch.Tensor, scale: float) -> torch.Tensor:
    """Resize a flow field and scale its vectors so they stay in output pixels."""
    return bilinear_resize(flow, scale) * scale


def flow_resize_to(flow: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Size-targeted variant of flow_rescale; each component scaled by its own axis ratio."""
    out = resize_to(flow, size)
    sx = size[1] / flow.shape[3]
    sy = size[0] / flow.shape[2]
    if sx == sy:
        return out * sx
    factors = torch.tensor([sx, sy], dtype=out.dtype, device=out.device)
    return out * factors.repeat(flow.shape[1] // 2).view(1, -1, 1, 1)


def gradient_check(op, inputs, epsilon: float = 1e-4) -> float:
    """Compare analytic gradients of sum(op(*inputs)) against central differences.

    Inputs are promoted to float64 leaves. Returns the largest relative
    discrepancy over every element of every input, where the relative error
    uses an absolute floor of 1e-3 in the denominator so near-zero gradient
    pairs are compared absolutely.
    """
    work = [t.detach().to(torch.float64).clone().requires_grad_(True) for t in inputs]
    out = op(*work).sum()
    analytic = torch.autograd.grad(out, work, allow_unused=True)

    worst = 0.0
    with torch.no_grad():
        for t, g in zip(work, analytic):
            g = torch.zeros_like(t) if g is None else g
            if not torch.isfinite(g).all():
                raise NumericalError("analytic gradient contains non-finite values")
            flat = t.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + epsilon
                hi = op(*work).sum().item()
                flat[i] = orig - epsilon
                lo = op(*work).sum().item()
                flat[i] = orig
                num = (hi - lo) / (2 * epsilon)
                a = gflat[i].item()
                rel = abs(a - num) / max(abs(a), abs(num), 1e-3)
                worst = max(worst, rel)
    return worst
