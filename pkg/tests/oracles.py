"""Independent brute-force reference implementations.

Everything here is written as plain nested-loop or direct-summation numpy in
float64, deliberately sharing no code with the package, so the fast paths
can be checked against a second opinion.
"""

import numpy as np


def bilinear_sample(img: np.ndarray, x: float, y: float) -> np.ndarray:
    """Edge-clamped bilinear lookup of an (H, W, C) array at one point."""
    h, w = img.shape[0], img.shape[1]
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def warp_oracle(img: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Backward warp of (H, W, C) by (H, W, 2), one pixel at a time."""
    h, w, c = img.shape
    out = np.zeros_like(img, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            out[y, x] = bilinear_sample(img, x + flow[y, x, 0], y + flow[y, x, 1])
    return out


def conv2d_oracle(img: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None,
                  stride: int = 1, padding: int = 0) -> np.ndarray:
    """Direct-summation cross-correlation. img (Cin, H, W), kernel (Cout, Cin, k, k)."""
    cin, h, w = img.shape
    cout, _, kh, kw = kernel.shape
    padded = np.zeros((cin, h + 2 * padding, w + 2 * padding), dtype=np.float64)
    padded[:, padding:padding + h, padding:padding + w] = img
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((cout, oh, ow), dtype=np.float64)
    for co in range(cout):
        for oy in range(oh):
            for ox in range(ow):
                acc = 0.0
                for ci in range(cin):
                    for ky in range(kh):
                        for kx in range(kw):
                            acc += padded[ci, oy * stride + ky, ox * stride + kx] \
                                * kernel[co, ci, ky, kx]
                out[co, oy, ox] = acc + (bias[co] if bias is not None else 0.0)
    return out


def deconv2d_oracle(img: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None,
                    stride: int = 2, padding: int = 1) -> np.ndarray:
    """Transposed convolution by direct scatter. kernel (Cin, Cout, k, k)."""
    cin, h, w = img.shape
    _, cout, kh, kw = kernel.shape
    fh = (h - 1) * stride + kh
    fw = (w - 1) * stride + kw
    full = np.zeros((cout, fh, fw), dtype=np.float64)
    for ci in range(cin):
        for y in range(h):
            for x in range(w):
                v = img[ci, y, x]
                for co in range(cout):
                    full[co, y * stride:y * stride + kh, x * stride:x * stride + kw] \
                        += v * kernel[ci, co]
    out = full[:, padding:fh - padding, padding:fw - padding]
    if bias is not None:
        out = out + bias[:, None, None]
    return out


def resize_oracle(img: np.ndarray, oh: int, ow: int) -> np.ndarray:
    """Pixel-center bilinear resize of (H, W, C), one output pixel at a time."""
    h, w = img.shape[0], img.shape[1]
    out = np.zeros((oh, ow, img.shape[2]), dtype=np.float64)
    for oy in range(oh):
        for ox in range(ow):
            sy = (oy + 0.5) * h / oh - 0.5
            sx = (ox + 0.5) * w / ow - 0.5
            out[oy, ox] = bilinear_sample(img, sx, sy)
    return out


def gauss_pyramid_oracle(img: np.ndarray, levels: int):
    """Laplacian pyramid on (H, W, C): reflect-padded [1,4,6,4,1] blur, 2x
    subsample, bands as differences against the bilinear-upsampled next level."""
    k1 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    k2 = np.outer(k1, k1)

    def blur(x):
        h, w, c = x.shape
        p = np.pad(x, ((2, 2), (2, 2), (0, 0)), mode="reflect")
        out = np.zeros_like(x, dtype=np.float64)
        for y in range(h):
            for xx in range(w):
                patch = p[y:y + 5, xx:xx + 5]
                out[y, xx] = np.einsum("ij,ijc->c", k2, patch)
        return out

    bands = []
    cur = img.astype(np.float64)
    for _ in range(levels - 1):
        down = blur(cur)[::2, ::2]
        up = resize_oracle(down, cur.shape[0], cur.shape[1])
        bands.append(cur - up)
        cur = down
    bands.append(cur)
    return bands


def ie_oracle(a: np.ndarray, b: np.ndarray) -> float:
    diff = (a.astype(np.float64) - b.astype(np.float64)) * 255.0
    return float(np.sqrt((diff ** 2).sum() / diff.size))
