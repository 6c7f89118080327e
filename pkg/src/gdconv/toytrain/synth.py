"""Synthetic moving-pattern sequences for desk-scale training runs.

A single-channel pattern (rectangle, checkerboard, or gaussian blob) is
translated along a constant-velocity or quadratic motion law and rendered
at each frame time plus the target time. Rectangle and checker edges use
exact area coverage so sub-pixel positions produce distinct images; the
blob is analytic and point-sampled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator

import numpy as np

from ..core import Frame, FrameStack, stack_new

MOTIONS = ("constant-velocity", "quadratic")
PATTERNS = ("rectangle", "checker", "gaussian-blob")


@dataclass(frozen=True)
class SynthSpec:
    height: int
    width: int
    motion: str = "constant-velocity"
    velocity: tuple[float, float] = (1.0, 0.0)
    acceleration: tuple[float, float] = (0.0, 0.0)
    pattern: str = "rectangle"
    frame_times: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    target_time: float = 1.5
    seed: int = 0

    def __post_init__(self) -> None:
        if self.motion not in MOTIONS:
            raise ValueError(f"unknown motion {self.motion!r}")
        if self.pattern not in PATTERNS:
            raise ValueError(f"unknown pattern {self.pattern!r}")
        if len(self.frame_times) < 2:
            raise ValueError("need at least 2 frame times")
        if not min(self.frame_times) <= self.target_time <= max(self.frame_times):
            raise ValueError("target_time must lie within the frame times")


@dataclass(frozen=True)
class SynthSample:
    stack: FrameStack
    target: Frame


def _position(spec: SynthSpec, base: np.ndarray, t: float) -> np.ndarray:
    v = np.asarray(spec.velocity, dtype=np.float64)
    if spec.motion == "constant-velocity":
        return base + v * t
    a = np.asarray(spec.acceleration, dtype=np.float64)
    return base + v * t + 0.5 * a * t * t


def _interval_overlap(x: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Covered length of [x-0.5, x+0.5] inside [lo, hi]."""
    return np.clip(np.minimum(x + 0.5, hi) - np.maximum(x - 0.5, lo), 0.0, 1.0)


def _square_wave_mean(x: np.ndarray, offset: float, cell: float) -> np.ndarray:
    """Mean of the +/-1 cell-parity wave over [x-0.5, x+0.5]."""

    # Exact antiderivative of the wave: +cell over even cells, -cell over
    # odd ones, so whole pairs cancel and only the cell phase remains.
    def f_int(u: np.ndarray) -> np.ndarray:
        s = (u - offset) / cell
        m = np.floor(s)
        f = s - m
        within = np.where(m % 2 == 0, f, -f)
        pair = np.where(m % 2 == 0, 0.0, 1.0)
        return cell * (within + pair)

    return f_int(x + 0.5) - f_int(x - 0.5)


def _render(spec: SynthSpec, geom: dict, t: float) -> Frame:
    h, w = spec.height, spec.width
    cx, cy = _position(spec, geom["base"], t)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    if spec.pattern == "rectangle":
        hx, hy = geom["half_x"], geom["half_y"]
        cov_x = _interval_overlap(xs, cx - hx, cx + hx)
        cov_y = _interval_overlap(ys, cy - hy, cy + hy)
        img = cov_x * cov_y
    elif spec.pattern == "checker":
        cell = geom["cell"]
        mx = _square_wave_mean(xs, cx, cell)
        my = _square_wave_mean(ys, cy, cell)
        img = 0.5 * (1.0 + mx * my)
    else:  # gaussian-blob
        sigma = geom["sigma"]
        r2 = (xs - cx) ** 2 + (ys - cy) ** 2
        img = np.exp(-r2 / (2.0 * sigma * sigma))
    return Frame(h, w, 1, img)


def synth_generate(spec: SynthSpec) -> SynthSample:
    """Render the stack and target for one spec; bit-deterministic per seed."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    # keep the pattern comfortably inside the frame over the whole motion
    span = np.asarray(
        [_position(spec, np.zeros(2), t) for t in (*spec.frame_times, spec.target_time)]
    )
    lo_span, hi_span = span.min(axis=0), span.max(axis=0)
    margin = 0.25 * min(h, w)
    base = np.array(
        [
            rng.uniform(margin - lo_span[0], w - margin - hi_span[0]),
            rng.uniform(margin - lo_span[1], h - margin - hi_span[1]),
        ]
    )
    geom = {
        "base": base,
        "half_x": rng.uniform(0.1 * w, 0.2 * w),
        "half_y": rng.uniform(0.1 * h, 0.2 * h),
        "cell": rng.uniform(3.0, 6.0),
        "sigma": rng.uniform(0.06 * min(h, w), 0.12 * min(h, w)),
    }
    frames = [_render(spec, geom, t) for t in spec.frame_times]
    target = _render(spec, geom, spec.target_time)
    return SynthSample(stack_new(frames, list(spec.frame_times)), target)


def synth_stream(
    base: SynthSpec,
    count: int | None = None,
    master_seed: int = 0,
    velocity_jitter: float = 0.0,
) -> Iterator[SynthSpec]:
    """Derived specs with fresh seeds (and optionally jittered velocity)."""
    rng = np.random.default_rng(master_seed)
    produced = 0
    while count is None or produced < count:
        seed = int(rng.integers(0, 2**63 - 1))
        spec = replace(base, seed=seed)
        if velocity_jitter > 0.0:
            jit = rng.uniform(-velocity_jitter, velocity_jitter, size=2)
            spec = replace(
                spec, velocity=(base.velocity[0] + jit[0], base.velocity[1] + jit[1])
            )
        yield spec
        produced += 1
