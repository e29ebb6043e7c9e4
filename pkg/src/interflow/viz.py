"""Flow field visualization with the usual color-wheel encoding."""

from __future__ import annotations

import numpy as np


def _hsv_to_rgb(h: np.ndarray, s: np.ndarray, v: np.ndarray) -> np.ndarray:
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    table = np.stack([
        np.stack([v, t, p], axis=-1),
        np.stack([q, v, p], axis=-1),
        np.stack([p, v, t], axis=-1),
        np.stack([p, q, v], axis=-1),
        np.stack([t, p, v], axis=-1),
        np.stack([v, p, q], axis=-1),
    ])
    return np.take_along_axis(table, i[None, ..., None], axis=0)[0]


def flow_to_color(flow: np.ndarray) -> np.ndarray:
    """Map an (H, W, 2) flow field to RGB: hue is direction, saturation is
    magnitude normalized by the field maximum. Zero flow renders white."""
    u = flow[..., 0].astype(np.float64)
    v = flow[..., 1].astype(np.float64)
    mag = np.hypot(u, v)
    peak = mag.max()
    sat = mag / peak if peak > 0 else np.zeros_like(mag)
    hue = (np.arctan2(-v, -u) / np.pi + 1.0) / 2.0  # [0, 1)
    rgb = _hsv_to_rgb(hue, sat, np.ones_like(sat))
    return rgb.astype(np.float32)
