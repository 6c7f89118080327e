"""Image quality metrics: PSNR, SSIM, and interpolation error.

SSIM uses a Gaussian 11x11 window (sigma 1.5) over valid positions only,
averaged across channels. Interpolation error is the root-mean-square
pixel difference on the 0-255 scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Frame

PSNR_SENTINEL_DB = 99.0


@dataclass(frozen=True)
class SsimCfg:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self) -> None:
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")


def _check_shapes(a: Frame, b: Frame) -> None:
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")


def psnr(a: Frame, b: Frame, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; 99.0 when the frames are identical."""
    _check_shapes(a, b)
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_SENTINEL_DB
    return float(10.0 * np.log10(peak * peak / mse))


def _gaussian_window(cfg: SsimCfg) -> np.ndarray:
    half = cfg.window // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * cfg.sigma * cfg.sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation of a 2-d image with a 1-d kernel."""
    win = k.size
    v = np.lib.stride_tricks.sliding_window_view(img, win, axis=0) @ k
    return np.lib.stride_tricks.sliding_window_view(v, win, axis=1) @ k


def ssim(a: Frame, b: Frame, cfg: SsimCfg = SsimCfg()) -> float:
    """Mean local structural similarity over valid window positions."""
    _check_shapes(a, b)
    if min(a.height, a.width) < cfg.window:
        raise ValueError(
            f"frame {a.height}x{a.width} smaller than window {cfg.window}"
        )
    k = _gaussian_window(cfg)
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    per_channel = []
    for ch in range(a.channels):
        x = a.plane(ch)
        y = b.plane(ch)
        mu_x = _filter_valid(x, k)
        mu_y = _filter_valid(y, k)
        var_x = _filter_valid(x * x, k) - mu_x * mu_x
        var_y = _filter_valid(y * y, k) - mu_y * mu_y
        cov = _filter_valid(x * y, k) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
        den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
        per_channel.append(np.mean(num / den))
    return float(np.mean(per_channel))


def interpolation_error(a: Frame, b: Frame) -> float:
    """Root-mean-square difference over all entries on the 0-255 scale."""
    _check_shapes(a, b)
    diff = (a.data - b.data) * 255.0
    return float(np.sqrt(np.mean(diff * diff)))
