"""Image quality metrics over (H, W, C) float arrays in [0, 1].

Conventions worth stating because the literature varies:

* PSNR against a peak of 1.0, returned as min(10*log10(1/MSE), 99) so
  identical images report 99 dB instead of infinity.
* SSIM with an 11x11 Gaussian window (sigma 1.5), k1=0.01, k2=0.03,
  sample-covariance normalization, scored on the luma of color inputs and
  averaged over the fully-covered window positions.
* Interpolation error as the root-mean-square difference on the 0..255
  scale, the MiddleBury benchmark convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import DimensionError

_LUMA = np.array([0.299, 0.587, 0.114])


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    return float(min(10.0 * np.log10(1.0 / max(mse, 1e-10)), 99.0))


def _to_gray(x: np.ndarray) -> np.ndarray:
    if x.ndim == 2:
        return x.astype(np.float64)
    if x.shape[2] == 1:
        return x[..., 0].astype(np.float64)
    return x.astype(np.float64) @ _LUMA


def ssim(a: np.ndarray, b: np.ndarray, k1: float = 0.01, k2: float = 0.03,
         sigma: float = 1.5, win_size: int = 11) -> float:
    _check_pair(a, b)
    x = _to_gray(a)
    y = _to_gray(b)
    if min(x.shape) < win_size:
        raise DimensionError(f"image {x.shape} smaller than the {win_size}x{win_size} window")

    r = (win_size - 1) // 2
    g = np.exp(-0.5 * (np.arange(-r, r + 1) / sigma) ** 2)
    win = np.outer(g, g)
    win /= win.sum()

    kernel = torch.from_numpy(win).view(1, 1, win_size, win_size)

    def filt(img: np.ndarray) -> np.ndarray:
        t = torch.from_numpy(img).view(1, 1, *img.shape)
        return torch.nn.functional.conv2d(t, kernel)[0, 0].numpy()

    ux, uy = filt(x), filt(y)
    uxx, uyy, uxy = filt(x * x), filt(y * y), filt(x * y)
    cov_norm = win_size ** 2 / (win_size ** 2 - 1)
    vx = cov_norm * (uxx - ux * ux)
    vy = cov_norm * (uyy - uy * uy)
    vxy = cov_norm * (uxy - ux * uy)

    c1 = k1 ** 2
    c2 = k2 ** 2
    num = (2 * ux * uy + c1) * (2 * vxy + c2)
    den = (ux * ux + uy * uy + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def interpolation_error(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    diff = 255.0 * (a.astype(np.float64) - b.astype(np.float64))
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    ie: float
    per_frame: list[dict] = field(default_factory=list)


def score_pairs(preds, targets, with_ssim: bool = True) -> MetricReport:
    rows = []
    for p, g in zip(preds, targets):
        rows.append({
            "psnr": psnr(p, g),
            "ssim": ssim(p, g) if with_ssim else float("nan"),
            "ie": interpolation_error(p, g),
        })
    if not rows:
        raise DimensionError("no image pairs to score")
    mean = {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
    return MetricReport(mean["psnr"], mean["ssim"], mean["ie"], rows)
