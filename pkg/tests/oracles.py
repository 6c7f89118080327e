"""Standalone reference implementations used to cross-check the library.

Everything here is deliberately written as plain loops, independent of the
package's vectorized code paths.
"""

from __future__ import annotations

import numpy as np


def bilinear_ref(plane: np.ndarray, x: float, y: float) -> float:
    """Plain bilinear read with replicate padding."""
    h, w = plane.shape
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0 = min(int(np.floor(x)), w - 2) if w > 1 else 0
    y0 = min(int(np.floor(y)), h - 2) if h > 1 else 0
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    return float(
        (1 - fy) * ((1 - fx) * plane[y0, x0] + fx * plane[y0, x1])
        + fy * ((1 - fx) * plane[y1, x0] + fx * plane[y1, x1])
    )


def conventional_ref(frames, weights, offsets) -> np.ndarray:
    """Fixed-offset, spatially-adaptive convolution over all frames.

    frames: list of (H, W, C); weights: (H, W, T+1, M); offsets: list of
    M (ox, oy) pairs shared by every frame.
    """
    h, w, c = frames[0].shape
    p = len(frames)
    out = np.zeros((h, w, c))
    for y in range(h):
        for x in range(w):
            for i in range(p):
                for m, (ox, oy) in enumerate(offsets):
                    for ch in range(c):
                        out[y, x, ch] += weights[y, x, i, m] * bilinear_ref(
                            frames[i][:, :, ch], x + ox, y + oy
                        )
    return out


def adacof_ref(frames, weights, alpha, beta) -> np.ndarray:
    """Per-frame adaptive offsets with integer frame assignment.

    weights/alpha/beta: (H, W, T+1, M).
    """
    h, w, c = frames[0].shape
    p = len(frames)
    out = np.zeros((h, w, c))
    for y in range(h):
        for x in range(w):
            for i in range(p):
                for m in range(alpha.shape[3]):
                    for ch in range(c):
                        out[y, x, ch] += weights[y, x, i, m] * bilinear_ref(
                            frames[i][:, :, ch],
                            x + alpha[y, x, i, m],
                            y + beta[y, x, i, m],
                        )
    return out


def flow_warp_ref(frame, u, v) -> np.ndarray:
    """Backward warping by a flow field: out(x, y) = I(x + u, y + v)."""
    h, w, c = frame.shape
    out = np.zeros((h, w, c))
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                out[y, x, ch] = bilinear_ref(
                    frame[:, :, ch], x + u[y, x], y + v[y, x]
                )
    return out


def ssim_ref(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
             k1: float = 0.01, k2: float = 0.03, dynamic_range: float = 1.0) -> float:
    """Direct double-loop SSIM over valid window positions of 2-d images."""
    half = window // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(xs * xs) / (2 * sigma * sigma))
    g1 /= g1.sum()
    kern = np.outer(g1, g1)
    c1 = (k1 * dynamic_range) ** 2
    c2 = (k2 * dynamic_range) ** 2
    h, w = a.shape
    vals = []
    for y in range(half, h - half):
        for x in range(half, w - half):
            pa = a[y - half : y + half + 1, x - half : x + half + 1]
            pb = b[y - half : y + half + 1, x - half : x + half + 1]
            mu_a = float((kern * pa).sum())
            mu_b = float((kern * pb).sum())
            va = float((kern * pa * pa).sum()) - mu_a * mu_a
            vb = float((kern * pb * pb).sum()) - mu_b * mu_b
            cov = float((kern * pa * pb).sum()) - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a * mu_a + mu_b * mu_b + c1) * (va + vb + c2)
            vals.append(num / den)
    return float(np.mean(vals))
