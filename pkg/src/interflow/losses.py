"""Training objectives: pyramid reconstruction loss, flow distillation, total.

The reconstruction distance is an L1 over Laplacian pyramid bands. The
pyramid uses the normalized binomial [1, 4, 6, 4, 1] kernel with reflect
padding (so constants are blur-invariant), halves resolution per level and
stores difference bands, which makes reconstruction by upsample-and-add
exact. Band l is weighted 2**l in the loss, the low-pass top included as the
last level.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import DimensionError
from .ops import resize_to

DISTILL_WEIGHT = 0.01  # default weight of the flow-distillation term

_KERNEL_1D = torch.tensor([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _gauss_kernel(channels: int, dtype, device) -> torch.Tensor:
    k = torch.outer(_KERNEL_1D, _KERNEL_1D).to(dtype=dtype, device=device)
    return k.expand(channels, 1, 5, 5).contiguous()


def _blur_down(x: torch.Tensor) -> torch.Tensor:
    """Gaussian blur and 2x subsample in one strided depthwise conv."""
    c = x.shape[1]
    k = _gauss_kernel(c, x.dtype, x.device)
    padded = torch.nn.functional.pad(x, (2, 2, 2, 2), mode="reflect")
    return torch.nn.functional.conv2d(padded, k, groups=c, stride=2)


def laplacian_pyramid(image: torch.Tensor, levels: int = 5) -> list[torch.Tensor]:
    """Decompose into ``levels - 1`` difference bands plus a low-pass top.

    Reconstruction (see :func:`laplacian_reconstruct`) is exact because each
    band stores the difference against the upsampled next level.
    """
    if levels < 1:
        raise DimensionError(f"levels must be >= 1, got {levels}")
    h, w = image.shape[2], image.shape[3]
    need = 2 ** (levels - 1)
    if h < need or w < need:
        raise DimensionError(f"{h}x{w} image too small for a {levels}-level pyramid")
    out = []
    cur = image
    for _ in range(levels - 1):
        down = _blur_down(cur)
        up = resize_to(down, (cur.shape[2], cur.shape[3]))
        out.append(cur - up)
        cur = down
    out.append(cur)
    return out


def laplacian_reconstruct(pyramid: list[torch.Tensor]) -> torch.Tensor:
    cur = pyramid[-1]
    for band in reversed(pyramid[:-1]):
        cur = band + resize_to(cur, (band.shape[2], band.shape[3]))
    return cur


def lap_loss(a: torch.Tensor, b: torch.Tensor, levels: int = 5) -> torch.Tensor:
    """Sum over pyramid levels of 2**level * mean(|band_a - band_b|)."""
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    pa = laplacian_pyramid(a, levels)
    pb = laplacian_pyramid(b, levels)
    total = a.new_zeros(())
    for lvl, (ba, bb) in enumerate(zip(pa, pb)):
        total = total + (2 ** lvl) * (ba - bb).abs().mean()
    return total


def l1_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def distillation_loss(student_flows: list[torch.Tensor], teacher_flow: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel endpoint distance between each student flow prediction
    and the (gradient-stopped) teacher flow, summed over the two directions
    and averaged over the prediction sequence."""
    tea = teacher_flow.detach()
    for flow in student_flows:
        if flow.shape != tea.shape:
            raise DimensionError(f"student flow {tuple(flow.shape)} vs teacher {tuple(tea.shape)}")
    n = len(student_flows)
    b, _, h, w = tea.shape
    diff = torch.stack(student_flows) - tea.unsqueeze(0)
    ss = (diff * diff).reshape(n, b, 2, 2, h, w).sum(dim=3)
    # smoothed sqrt: exactly 0 at equality, with a zero (not NaN) gradient there
    eps = 1e-9
    epe = torch.sqrt(ss + eps * eps) - eps
    return epe.mean(dim=(1, 3, 4)).sum(dim=1).mean()


@dataclass
class LossReport:
    """Scalar terms of one training objective evaluation (0-d tensors)."""

    l_rec: torch.Tensor
    l_rec_tea: torch.Tensor
    l_dis: torch.Tensor
    l_total: torch.Tensor
    lambda_d: float

    def floats(self) -> dict[str, float]:
        return {
            "l_rec": float(self.l_rec.detach()),
            "l_rec_tea": float(self.l_rec_tea.detach()),
            "l_dis": float(self.l_dis.detach()),
            "l_total": float(self.l_total.detach()),
        }


def total_loss(student_image: torch.Tensor, teacher_image: torch.Tensor, target: torch.Tensor,
               student_flows: list[torch.Tensor], teacher_flow: torch.Tensor,
               lambda_d: float = DISTILL_WEIGHT, rec_loss: str = "lap",
               levels: int = 5) -> LossReport:
    """l_rec + l_rec_tea + lambda_d * l_dis.

    ``rec_loss`` selects the reconstruction distance: "lap" (default) or a
    plain per-pixel "l1".
    """
    if rec_loss == "lap":
        # one batched pyramid instead of three: same bands, a third of the convs
        b = student_image.shape[0]
        pyr = laplacian_pyramid(torch.cat([student_image, teacher_image, target], dim=0), levels)
        l_rec = student_image.new_zeros(())
        l_rec_tea = student_image.new_zeros(())
        for lvl, band in enumerate(pyr):
            s, tea, tgt = band.split(b, dim=0)
            l_rec = l_rec + (2 ** lvl) * (s - tgt).abs().mean()
            l_rec_tea = l_rec_tea + (2 ** lvl) * (tea - tgt).abs().mean()
    else:
        l_rec = l1_loss(student_image, target)
        l_rec_tea = l1_loss(teacher_image, target)
    l_dis = distillation_loss(student_flows, teacher_flow)
    l_total = l_rec + l_rec_tea + lambda_d * l_dis
    return LossReport(l_rec, l_rec_tea, l_dis, l_total, lambda_d)
