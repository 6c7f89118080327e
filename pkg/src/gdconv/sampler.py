"""Bilinear sampling at fractional coordinates with analytic derivatives.

Coordinates use x for columns and y for rows, origin at the top-left pixel
center. Positions outside [0, W-1] x [0, H-1] are clamped to the border
before blending (replicate padding), so out-of-range reads return border
values and carry zero derivative along the clamped axis.

Derivative convention at integer coordinates: right-derivative, except at
the top border (x = W-1 or y = H-1) where the left-derivative applies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Frame


@dataclass(frozen=True)
class SamplePos:
    x: float
    y: float


@dataclass(frozen=True)
class BilinearPartials:
    d_x: float
    d_y: float
    d_corners: tuple[tuple[tuple[int, int], float], ...]  # ((row, col), weight) x 4


class BilinearMap:
    """Corner indices and blend weights for bilinear reads of (H, W) planes.

    Built once per coordinate set and reused across channels: the corner
    geometry depends only on the positions, not on the plane values.
    """

    def __init__(self, height: int, width: int, xs: np.ndarray, ys: np.ndarray):
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        self.height = height
        self.width = width
        self.in_x = (xs >= 0.0) & (xs <= width - 1.0)
        self.in_y = (ys >= 0.0) & (ys <= height - 1.0)
        xc = np.clip(xs, 0.0, width - 1.0)
        yc = np.clip(ys, 0.0, height - 1.0)
        # Capping the cell index at size-2 sends the blend weight fully to the
        # far corner at the top border, which realizes the left-derivative
        # convention there; elsewhere floor gives the right-derivative.
        if width > 1:
            x0 = np.minimum(np.floor(xc), width - 2).astype(np.int64)
            fx = xc - x0
        else:
            x0 = np.zeros(xc.shape, dtype=np.int64)
            fx = np.zeros_like(xc)
        if height > 1:
            y0 = np.minimum(np.floor(yc), height - 2).astype(np.int64)
            fy = yc - y0
        else:
            y0 = np.zeros(yc.shape, dtype=np.int64)
            fy = np.zeros_like(yc)
        x1 = np.minimum(x0 + 1, width - 1)
        y1 = np.minimum(y0 + 1, height - 1)
        self.fx, self.fy = fx, fy
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.i00 = y0 * width + x0
        self.i01 = y0 * width + x1
        self.i10 = y1 * width + x0
        self.i11 = y1 * width + x1
        self.w00 = (1.0 - fy) * (1.0 - fx)
        self.w01 = (1.0 - fy) * fx
        self.w10 = fy * (1.0 - fx)
        self.w11 = fy * fx

    def sample(self, plane: np.ndarray) -> np.ndarray:
        f = plane.ravel()
        return (
            self.w00 * f[self.i00]
            + self.w01 * f[self.i01]
            + self.w10 * f[self.i10]
            + self.w11 * f[self.i11]
        )

    def sample_with_grads(self, plane: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Sampled values plus derivatives w.r.t. the x and y coordinates."""
        f = plane.ravel()
        v00, v01 = f[self.i00], f[self.i01]
        v10, v11 = f[self.i10], f[self.i11]
        val = self.w00 * v00 + self.w01 * v01 + self.w10 * v10 + self.w11 * v11
        d_x = ((1.0 - self.fy) * (v01 - v00) + self.fy * (v11 - v10)) * self.in_x
        d_y = ((1.0 - self.fx) * (v10 - v00) + self.fx * (v11 - v01)) * self.in_y
        return val, d_x, d_y

    def scatter(self, g: np.ndarray) -> np.ndarray:
        """Adjoint of sample: accumulate upstream values onto the grid."""
        idx = np.concatenate(
            [self.i00.ravel(), self.i01.ravel(), self.i10.ravel(), self.i11.ravel()]
        )
        w = np.concatenate(
            [
                (self.w00 * g).ravel(),
                (self.w01 * g).ravel(),
                (self.w10 * g).ravel(),
                (self.w11 * g).ravel(),
            ]
        )
        flat = np.bincount(idx, weights=w, minlength=self.height * self.width)
        return flat.reshape(self.height, self.width)


def _single_map(frame: Frame, channel: int, pos: SamplePos) -> BilinearMap:
    if not 0 <= channel < frame.channels:
        raise IndexError(f"channel {channel} out of range [0, {frame.channels})")
    return BilinearMap(frame.height, frame.width, np.float64(pos.x), np.float64(pos.y))


def bilinear_sample(frame: Frame, channel: int, pos: SamplePos) -> float:
    """Bilinear blend of the 4 neighboring grid values, border-clamped."""
    bm = _single_map(frame, channel, pos)
    return float(bm.sample(frame.plane(channel)))


def bilinear_partials(frame: Frame, channel: int, pos: SamplePos) -> BilinearPartials:
    """Analytic derivatives of bilinear_sample w.r.t. the position and frame."""
    bm = _single_map(frame, channel, pos)
    _, d_x, d_y = bm.sample_with_grads(frame.plane(channel))
    corners = (
        ((int(bm.y0), int(bm.x0)), float(bm.w00)),
        ((int(bm.y0), int(bm.x1)), float(bm.w01)),
        ((int(bm.y1), int(bm.x0)), float(bm.w10)),
        ((int(bm.y1), int(bm.x1)), float(bm.w11)),
    )
    return BilinearPartials(float(d_x), float(d_y), corners)
