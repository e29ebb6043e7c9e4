"""Residual refinement of the fused frame.

A small context extractor builds a 4-level feature pyramid from each input
frame; the pyramids are aligned to the target instant by backward-warping
each level with the rescaled flows, then fed into a U-Net-shaped
encoder-decoder alongside the frames, warps, flows and fusion mask. The
decoder ends in a zero-initialized projection followed by tanh, so the
residual starts at exactly zero and stays within [-1, 1].
"""

from __future__ import annotations

import torch
from torch import nn

from .config import RefineConfig
from .errors import ContractViolation, DimensionError
from .ops import backward_warp, flow_resize_to, resize_to


def fuse(warped0: torch.Tensor, warped1: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Per-pixel convex blend: mask * warped0 + (1 - mask) * warped1."""
    if warped0.shape != warped1.shape:
        raise DimensionError(f"warped frames differ: {tuple(warped0.shape)} vs {tuple(warped1.shape)}")
    if mask.shape[0] != warped0.shape[0] or mask.shape[2:] != warped0.shape[2:]:
        raise DimensionError(f"mask {tuple(mask.shape)} does not match frames {tuple(warped0.shape)}")
    if mask.min() < 0 or mask.max() > 1:
        raise ContractViolation(f"fusion mask outside [0, 1]: min={float(mask.min()):g} max={float(mask.max()):g}")
    return mask * warped0 + (1 - mask) * warped1


def reconstruct(fused: torch.Tensor, delta: torch.Tensor) -> torch.Tensor:
    """Apply the refinement residual and clamp into displayable range."""
    if fused.shape != delta.shape:
        raise DimensionError(f"shape mismatch {tuple(fused.shape)} vs {tuple(delta.shape)}")
    return (fused + delta).clamp(0.0, 1.0)


def _conv_block(cin, cout, stride):
    block = nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride, 1), nn.PReLU(cout),
        nn.Conv2d(cout, cout, 3, 1, 1), nn.PReLU(cout),
    )
    for m in block:
        if isinstance(m, nn.Conv2d):
            nn.init.kaiming_normal_(m.weight, a=0.25, nonlinearity="leaky_relu")
            nn.init.zeros_(m.bias)
    return block


class ContextExtractor(nn.Module):
    """Four stride-2 conv blocks producing features at 1/2 .. 1/16 resolution."""

    def __init__(self, base_width: int, in_channels: int = 3):
        super().__init__()
        widths = [base_width * (2 ** i) for i in range(4)]
        chans = [in_channels] + widths
        self.levels = nn.ModuleList(
            _conv_block(chans[i], chans[i + 1], stride=2) for i in range(4))
        self.widths = widths

    def forward(self, image: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        x = image.contiguous(memory_format=torch.channels_last)
        for level in self.levels:
            x = level(x)
            feats.append(x.contiguous())
        return feats


class RefineNet(nn.Module):
    """Encoder-decoder producing the reconstruction residual."""

    def __init__(self, cfg: RefineConfig):
        super().__init__()
        self.cfg = cfg
        self.context = ContextExtractor(cfg.context_width)
        cw = self.context.widths
        e = cfg.encoder_width
        ew = [e, 2 * e, 4 * e, 8 * e]
        # frames + warped frames + flows + mask
        head_in = 3 + 3 + 3 + 3 + 4 + 1
        enc_in = [head_in, ew[0] + 2 * cw[0], ew[1] + 2 * cw[1], ew[2] + 2 * cw[2]]
        self.encoder = nn.ModuleList(
            _conv_block(enc_in[i], ew[i], stride=2) for i in range(4))

        bottom = ew[3] + 2 * cw[3]
        dec_in = [bottom, ew[2] + 2 * cw[2] + ew[2], ew[1] + 2 * cw[1] + ew[1], ew[0] + 2 * cw[0] + ew[0]]
        dec_out = [ew[2], ew[1], ew[0], e]
        self.decoder = nn.ModuleList()
        for cin, cout in zip(dec_in, dec_out):
            self.decoder.append(nn.Sequential(
                nn.ConvTranspose2d(cin, cout, 4, 2, 1), nn.PReLU(cout)))
        self.out = nn.Conv2d(e, 3, 3, 1, 1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def extract_context(self, image: torch.Tensor) -> list[torch.Tensor]:
        return self.context(image)

    def refine(self, i0, i1, warped0, warped1, flow, mask, ctx0, ctx1) -> torch.Tensor:
        """Residual from frames, current estimate and per-frame context pyramids."""
        if len(ctx0) != 4 or len(ctx1) != 4:
            raise DimensionError("context pyramids must have 4 levels")
        h, w = i0.shape[2], i0.shape[3]
        warped_ctx = []
        for lvl, (c0, c1) in enumerate(zip(ctx0, ctx1)):
            size = (h >> (lvl + 1), w >> (lvl + 1))
            if tuple(c0.shape[2:]) != size or tuple(c1.shape[2:]) != size:
                raise DimensionError(
                    f"context level {lvl} is {tuple(c0.shape[2:])}, expected {size}")
            fl = flow_resize_to(flow, size)
            pair = backward_warp(torch.cat([c0, c1], dim=0),
                                 torch.cat([fl[:, 0:2], fl[:, 2:4]], dim=0))
            warped_ctx.append(pair.chunk(2, dim=0))

        x = torch.cat([i0, i1, warped0, warped1, flow, mask], dim=1)
        x = x.contiguous(memory_format=torch.channels_last)
        skips = []
        for lvl, block in enumerate(self.encoder):
            x = block(x)
            x = torch.cat([x, *warped_ctx[lvl]], dim=1)
            x = x.contiguous(memory_format=torch.channels_last)
            skips.append(x)

        x = skips[3]
        for i, block in enumerate(self.decoder):
            x = block(x)
            if i < 3:
                x = torch.cat([skips[2 - i], x], dim=1)
                x = x.contiguous(memory_format=torch.channels_last)
        return torch.tanh(self.out(x))

    def forward(self, i0, i1, warped0, warped1, flow, mask,
                internal_scale: int | None = None) -> torch.Tensor:
        """Full residual path, including context extraction.

        With ``internal_scale == 2`` everything runs on 2x upsampled inputs
        and the residual is sampled back down, which doubles the working
        resolution of every layer without changing any parameter shape.
        """
        s = internal_scale or self.cfg.internal_scale
        if s != 1:
            h, w = i0.shape[2], i0.shape[3]
            big = (h * s, w * s)
            i0, i1, warped0, warped1, mask = (resize_to(x, big) for x in (i0, i1, warped0, warped1, mask))
            flow = flow_resize_to(flow, big)
        ctx0 = self.context(i0)
        ctx1 = self.context(i1)
        delta = self.refine(i0, i1, warped0, warped1, flow, mask, ctx0, ctx1)
        if s != 1:
            delta = resize_to(delta, (h, w))
        return delta
