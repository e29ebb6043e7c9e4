"""Wall-clock benchmark of the interpolation call across resolutions."""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .pipeline import InterpOptions, Model, interpolate

# Published timings for this architecture family on a TITAN X (Pascal) GPU,
# shown as context next to local measurements; never compared against.
REFERENCE_TIMINGS = [
    "reference (TITAN X Pascal): flow network alone 7 ms at 640x480",
    "reference (TITAN X Pascal): full pipeline 16 ms at 640x480, 31 ms at 720p, 68 ms at 1080p",
]


@dataclass
class BenchRow:
    width: int
    height: int
    mean_ms: float
    std_ms: float
    runs: int


@dataclass
class BenchReport:
    rows: list[BenchRow]
    hardware: str
    slope_ms_per_mpix: float
    r_squared: float
    reference: list[str] = field(default_factory=lambda: list(REFERENCE_TIMINGS))

    def lines(self) -> list[str]:
        out = [f"hardware: {self.hardware}"]
        for r in self.rows:
            out.append(f"{r.width}x{r.height}: {r.mean_ms:.2f} ms +- {r.std_ms:.2f} (n={r.runs})")
        out.append(f"linear fit: {self.slope_ms_per_mpix:.2f} ms/Mpix, R^2={self.r_squared:.4f}")
        out.extend(self.reference)
        return out


def bench_runtime(model: Model, resolutions, runs: int = 10, warmup: int = 2,
                  opts: InterpOptions | None = None) -> BenchReport:
    """Time the full interpolation call per resolution (single-threaded).

    The linear fit of mean time against pixel count is advisory output;
    nothing here asserts against any published number.
    """
    runs = max(runs, 10)
    rows = []
    times_flat = []
    pixels = []
    for width, height in resolutions:
        g = torch.Generator().manual_seed(0)
        i0 = torch.rand((1, 3, height, width), generator=g)
        i1 = torch.rand((1, 3, height, width), generator=g)
        with torch.no_grad():
            for _ in range(warmup):
                interpolate(model, i0, i1, 0.5, opts)
            samples = []
            for _ in range(runs):
                t0 = time.perf_counter()
                interpolate(model, i0, i1, 0.5, opts)
                samples.append((time.perf_counter() - t0) * 1e3)
        rows.append(BenchRow(width, height, float(np.mean(samples)),
                             float(np.std(samples)), runs))
        pixels.append(width * height)
        times_flat.append(np.mean(samples))

    slope, r2 = _linear_fit(np.array(pixels, dtype=float), np.array(times_flat))
    hardware = f"{platform.machine()} cpu, {torch.get_num_threads()} torch thread(s)"
    return BenchReport(rows, hardware, slope * 1e6, r2)


def _linear_fit(x: np.ndarray, y: np.ndarray):
    if len(x) < 2:
        return float("nan"), float("nan")
    coeffs = np.polyfit(x, y, 1)
    pred = np.polyval(coeffs, x)
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return float(coeffs[0]), r2
