"""Desk-scale end-to-end training loop for the warp operator.

Single-sample Adam on the Charbonnier loss of the warped frame against the
synthetic target. The operator's frame stack is restricted to the chosen
reference frames; the predictor consumes the (possibly different) set of
generation frames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from ..conv import Freedom, gdconv_backward, gdconv_forward
from ..core import Field, Frame, FrameStack, read_field, substack, write_field
from ..interp import InterpKind
from ..metrics import psnr
from .predictor import PredictorCfg, ToyPredictor
from .synth import SynthSample, SynthSpec, synth_generate


@dataclass(frozen=True)
class CharbonnierCfg:
    """Smooth-L1 configuration; lambda_w weights an auxiliary warped-frame
    term when a refinement stage is present (kept for config fidelity,
    unused by the single-term toy loss)."""

    epsilon: float = 1e-6
    lambda_w: float = 0.5

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.lambda_w < 0:
            raise ValueError("lambda_w must be nonnegative")


def charbonnier_loss(pred: Frame, gt: Frame, cfg: CharbonnierCfg = CharbonnierCfg()) -> float:
    """Sum over all entries of sqrt((pred-gt)^2 + epsilon^2)."""
    if pred.shape != gt.shape:
        raise ValueError(f"frame shapes differ: {pred.shape} vs {gt.shape}")
    d = pred.data - gt.data
    return float(np.sum(np.sqrt(d * d + cfg.epsilon * cfg.epsilon)))


def charbonnier_with_grad(
    pred: np.ndarray, gt: np.ndarray, cfg: CharbonnierCfg = CharbonnierCfg()
) -> tuple[float, np.ndarray]:
    d = pred - gt
    root = np.sqrt(d * d + cfg.epsilon * cfg.epsilon)
    return float(root.sum()), d / root


@dataclass(frozen=True)
class AdamCfg:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


class Adam:
    """Standard bias-corrected Adam on one flat parameter vector."""

    def __init__(self, size: int, cfg: AdamCfg = AdamCfg()):
        self.cfg = cfg
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        c = self.cfg
        self.t += 1
        self.m = c.beta1 * self.m + (1.0 - c.beta1) * grads
        self.v = c.beta2 * self.v + (1.0 - c.beta2) * grads * grads
        m_hat = self.m / (1.0 - c.beta1**self.t)
        v_hat = self.v / (1.0 - c.beta2**self.t)
        params -= c.lr * m_hat / (np.sqrt(v_hat) + c.epsilon)


def effective_time(times: Sequence[float], target_time: float) -> float:
    """Map a physical time onto the [0, T] support-index axis of a stack."""
    times = list(times)
    t = len(times) - 1
    if target_time <= times[0]:
        return 0.0
    if target_time >= times[-1]:
        return float(t)
    j = max(i for i in range(t) if times[i] <= target_time)
    return j + (target_time - times[j]) / (times[j + 1] - times[j])


@dataclass
class TrainResult:
    predictor: ToyPredictor
    loss_curve: list[float]


def _check_indices(name: str, indices: Sequence[int], total: int) -> None:
    if len(indices) == 0:
        raise ValueError(f"{name} must be nonempty")
    for i in indices:
        if not 0 <= i < total:
            raise ValueError(f"{name} index {i} out of range [0, {total})")


def build_predictor(
    sample: SynthSample,
    target_time: float,
    reference_indices: Sequence[int],
    generation_indices: Sequence[int],
    n_points: int,
    freedom: Freedom,
    seed: int,
    hidden: int = 32,
    layers: int = 4,
    grid_step: float = 1.0,
) -> ToyPredictor:
    ref = substack(sample.stack, list(reference_indices))
    cfg = PredictorCfg(
        in_channels=len(generation_indices) * sample.stack.channels,
        n_points=n_points,
        t_plus_1=len(reference_indices),
        freedom=freedom,
        hidden=hidden,
        layers=layers,
        z_fixed=effective_time(ref.times, target_time),
        grid_step=grid_step,
    )
    return ToyPredictor(cfg, seed=seed)


def train(
    specs: Iterable[SynthSpec],
    reference_indices: Sequence[int],
    generation_indices: Sequence[int],
    kind: InterpKind,
    steps: int,
    adam_cfg: AdamCfg = AdamCfg(),
    charbonnier: CharbonnierCfg = CharbonnierCfg(),
    n_points: int = 4,
    freedom: Freedom = Freedom.E,
    seed: int = 0,
    predictor: ToyPredictor | None = None,
    hidden: int = 32,
    layers: int = 4,
    grid_step: float = 1.0,
) -> TrainResult:
    """Run single-sample Adam steps; returns the predictor and the per-step
    loss curve. Deterministic given the seed and the spec sequence."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    spec_list = list(specs) if not isinstance(specs, (list, tuple)) else list(specs)
    if not spec_list:
        raise ValueError("need at least one spec")
    samples = [synth_generate(s) for s in spec_list]
    total = len(samples[0].stack)
    _check_indices("reference", reference_indices, total)
    _check_indices("generation", generation_indices, total)

    if predictor is None:
        # fixed-z variants pin the temporal coordinate to the target's
        # position on the reference-frame axis
        predictor = build_predictor(
            samples[0], spec_list[0].target_time,
            reference_indices, generation_indices, n_points, freedom, seed,
            hidden=hidden, layers=layers, grid_step=grid_step,
        )

    optimizer = Adam(predictor.n_parameters, adam_cfg)
    loss_curve: list[float] = []
    for step in range(steps):
        sample = samples[step % len(samples)]
        gen = substack(sample.stack, list(generation_indices))
        ref = substack(sample.stack, list(reference_indices))
        params, cache = predictor.forward_with_cache(gen)
        warped = gdconv_forward(ref, params, kind)
        loss, g_warped = charbonnier_with_grad(warped.data, sample.target.data, charbonnier)
        bundle = gdconv_backward(ref, params, kind, Frame(*warped.shape, g_warped))
        g_flat = predictor.backward(cache, bundle)
        optimizer.step(predictor.params, g_flat)
        loss_curve.append(loss)
    return TrainResult(predictor, loss_curve)


@dataclass(frozen=True)
class EvalReport:
    psnr_model: float
    psnr_baseline: float
    loss_model: float


def evaluate(
    predictor: ToyPredictor,
    spec: SynthSpec,
    reference_indices: Sequence[int],
    generation_indices: Sequence[int],
    kind: InterpKind,
    charbonnier: CharbonnierCfg = CharbonnierCfg(),
) -> EvalReport:
    """Model PSNR against the target, next to the reference-average baseline."""
    sample = synth_generate(spec)
    gen = substack(sample.stack, list(generation_indices))
    ref = substack(sample.stack, list(reference_indices))
    params = predictor.forward(gen)
    warped = gdconv_forward(ref, params, kind)
    baseline = Frame(
        ref.height, ref.width, ref.channels,
        np.mean([f.data for f in ref.frames], axis=0),
    )
    return EvalReport(
        psnr_model=psnr(warped, sample.target),
        psnr_baseline=psnr(baseline, sample.target),
        loss_model=charbonnier_loss(warped, sample.target, charbonnier),
    )


# ---------------------------------------------------------------------------
# Checkpoints: flat float vector in a GDCF container + JSON manifest


def save_checkpoint(predictor: ToyPredictor, manifest_path: str | Path) -> None:
    manifest_path = Path(manifest_path)
    vec_name = manifest_path.stem + ".params.gdcf"
    write_field(
        Field(1, 1, predictor.n_parameters, predictor.params.copy()),
        manifest_path.parent / vec_name,
    )
    cfg = predictor.cfg
    manifest = {
        "format": "gdconv-predictor-v1",
        "in_channels": cfg.in_channels,
        "n_points": cfg.n_points,
        "t_plus_1": cfg.t_plus_1,
        "freedom": cfg.freedom.value,
        "hidden": cfg.hidden,
        "layers": cfg.layers,
        "z_fixed": cfg.z_fixed,
        "grid_step": cfg.grid_step,
        "parameters": vec_name,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(manifest_path: str | Path) -> ToyPredictor:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    cfg = PredictorCfg(
        in_channels=int(manifest["in_channels"]),
        n_points=int(manifest["n_points"]),
        t_plus_1=int(manifest["t_plus_1"]),
        freedom=Freedom(manifest["freedom"]),
        hidden=int(manifest["hidden"]),
        layers=int(manifest["layers"]),
        z_fixed=float(manifest["z_fixed"]),
        grid_step=float(manifest["grid_step"]),
    )
    vec = read_field(manifest_path.parent / manifest["parameters"])
    return ToyPredictor(cfg, params=vec.data.ravel())
