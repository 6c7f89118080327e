"""Randomized finite-difference verification of every analytic gradient.

Each suite draws random configurations away from derivative kinks (integer
sample positions, integer z for the linear kernel, active clamp switch
points) and compares analytic partials against central differences. Trial
i of a run with seed s uses generator seed s+i, so any failing trial can
be replayed alone with --trials 1 --seed s+i.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .conv import gdconv_backward, gdconv_forward, params_new
from .core import Frame, stack_new, substack
from .interp import VARIANTS, InterpKind, SupportSet, interp_eval, interp_partials
from .sampler import SamplePos, bilinear_partials, bilinear_sample
from .toytrain.predictor import PredictorCfg, ToyPredictor
from .toytrain.synth import SynthSpec, synth_generate
from .toytrain.train import CharbonnierCfg, charbonnier_with_grad

# relative-error floor: differences below this magnitude are compared
# absolutely, which keeps finite-difference roundoff out of the verdict
REL_FLOOR = 1e-3

TOLERANCES = {
    "interp": 1e-5,
    "sampler": 1e-6,
    "gdconv": 1e-4,
    "pipeline": 1e-3,
}


def rel_err(analytic: float, fd: float, floor: float = REL_FLOOR) -> float:
    return abs(analytic - fd) / max(abs(analytic), abs(fd), floor)


@dataclass
class FieldReport:
    suite: str
    name: str
    tolerance: float
    worst: float = 0.0
    worst_config: str = ""

    @property
    def ok(self) -> bool:
        return self.worst <= self.tolerance

    def update(self, err: float, config: str) -> None:
        if err > self.worst:
            self.worst = err
            self.worst_config = config


@dataclass
class GradcheckReport:
    fields: list[FieldReport] = dc_field(default_factory=list)
    trials_run: int = 0

    @property
    def ok(self) -> bool:
        return all(f.ok for f in self.fields)

    def lines(self) -> list[str]:
        out = []
        for f in self.fields:
            status = "ok" if f.ok else "FAIL"
            line = f"{f.suite}/{f.name}: worst_rel={f.worst:.3e} tol={f.tolerance:.0e} {status}"
            if not f.ok:
                line += f"  [{f.worst_config}]"
            out.append(line)
        return out


def _away_from_integers(rng, low, high, margin=2e-3, size=None):
    """Uniform draw with integer values excluded by a margin."""
    for _ in range(200):
        x = rng.uniform(low, high, size=size)
        frac = np.abs(x - np.round(x))
        if np.all(frac > margin):
            return x
    raise RuntimeError("could not draw values away from integers")


def _central_diff(f, x0: float, h: float) -> float:
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)


# ---------------------------------------------------------------------------
# interp suite


def _sample_interp_config(rng, variant: str):
    p = int(rng.integers(2, 5))
    values = tuple(rng.uniform(0.0, 1.0, p))
    sdx = tuple(rng.uniform(-2.0, 2.0, p))
    sdy = tuple(rng.uniform(-2.0, 2.0, p))
    dxn, dyn = rng.uniform(-2.0, 2.0, 2)
    kind = InterpKind(variant, norm_h=8.0, norm_w=8.0)
    for _ in range(100):
        z = float(_away_from_integers(rng, 2e-3, p - 1 - 2e-3))
        if variant != "poly-clamped":
            break
        raw = interp_eval(InterpKind("poly"), dxn, dyn, z, SupportSet(values, sdx, sdy))
        if min(abs(raw - min(values)), abs(raw - max(values))) > 2e-3:
            break
    return kind, dxn, dyn, z, SupportSet(values, sdx, sdy)


def _check_interp_trial(rng, variant: str, report: dict, config_tag: str, h: float = 1e-5):
    kind, dxn, dyn, z, sup = _sample_interp_config(rng, variant)
    part = interp_partials(kind, dxn, dyn, z, sup)

    fd = _central_diff(lambda v: interp_eval(kind, dxn, dyn, v, sup), z, h)
    report["d_z"].update(rel_err(part.d_z, fd), config_tag)

    p = len(sup.values)
    for i in range(p):
        def with_value(v, i=i):
            vals = list(sup.values)
            vals[i] = v
            return interp_eval(kind, dxn, dyn, z, SupportSet(tuple(vals), sup.dx, sup.dy))

        fd = _central_diff(with_value, sup.values[i], h)
        report["d_values"].update(rel_err(part.d_values[i], fd), config_tag)

        def with_dx(v, i=i):
            dxs = list(sup.dx)
            dxs[i] = v
            return interp_eval(kind, dxn, dyn, z, SupportSet(sup.values, tuple(dxs), sup.dy))

        fd = _central_diff(with_dx, sup.dx[i], h)
        report["d_dx"].update(rel_err(part.d_dx[i], fd), config_tag)

        def with_dy(v, i=i):
            dys = list(sup.dy)
            dys[i] = v
            return interp_eval(kind, dxn, dyn, z, SupportSet(sup.values, sup.dx, tuple(dys)))

        fd = _central_diff(with_dy, sup.dy[i], h)
        report["d_dy"].update(rel_err(part.d_dy[i], fd), config_tag)


# ---------------------------------------------------------------------------
# sampler suite


def _check_sampler_trial(rng, report: dict, config_tag: str, h: float = 1e-5):
    hgt = int(rng.integers(3, 9))
    wid = int(rng.integers(3, 9))
    frame = Frame(hgt, wid, 1, rng.uniform(0.0, 1.0, (hgt, wid, 1)))
    x = float(_away_from_integers(rng, 0.05, wid - 1.05))
    y = float(_away_from_integers(rng, 0.05, hgt - 1.05))
    part = bilinear_partials(frame, 0, SamplePos(x, y))
    fd_x = _central_diff(lambda v: bilinear_sample(frame, 0, SamplePos(v, y)), x, h)
    fd_y = _central_diff(lambda v: bilinear_sample(frame, 0, SamplePos(x, v)), y, h)
    report["d_x"].update(rel_err(part.d_x, fd_x), config_tag)
    report["d_y"].update(rel_err(part.d_y, fd_y), config_tag)

    # frame gradient: sampling is linear in the pixels, so one secant
    # through any corner is exact
    (ry, rx), wgt = part.d_corners[int(rng.integers(0, 4))]

    def with_pixel(v):
        data = frame.data.copy()
        data[ry, rx, 0] = v
        return bilinear_sample(Frame(hgt, wid, 1, data), 0, SamplePos(x, y))

    fd_c = _central_diff(with_pixel, float(frame.data[ry, rx, 0]), 1e-3)
    report["d_frame"].update(rel_err(wgt, fd_c), config_tag)


# ---------------------------------------------------------------------------
# gdconv suite


def _sample_gdconv_config(rng, variant: str):
    hgt = int(rng.integers(3, 7))
    wid = int(rng.integers(3, 7))
    c = int(rng.integers(1, 3))
    p = int(rng.integers(2, 5))
    n = int(rng.integers(1, 5))
    frames = [Frame(hgt, wid, c, rng.uniform(0.0, 1.0, (hgt, wid, c))) for _ in range(p)]
    stack = stack_new(frames)
    kind = InterpKind(variant)

    shape = (hgt, wid, n)
    weights = rng.uniform(-1.0, 1.0, shape)
    dx = rng.uniform(-1.5, 1.5, shape)
    dy = rng.uniform(-1.5, 1.5, shape)
    mod = rng.uniform(0.05, 0.95, shape)
    sup_dx = rng.uniform(-1.5, 1.5, (hgt, wid, n * p))
    sup_dy = rng.uniform(-1.5, 1.5, (hgt, wid, n * p))
    z = _away_from_integers(rng, 2e-3, p - 1 - 2e-3, size=shape)

    # keep every support position away from pixel-lattice kinks and the
    # border clamp switch, where one-sided derivatives are expected
    ys, xs = np.mgrid[0:hgt, 0:wid].astype(np.float64)
    for arr, base, limit in ((sup_dx, xs, wid), (sup_dy, ys, hgt)):
        pos = base[:, :, None] + arr
        frac = np.abs(pos - np.round(pos))
        bad = (frac < 5e-4) | (np.abs(pos + 1.0) < 5e-4) | (np.abs(pos - limit) < 5e-4)
        arr[bad] += 0.11

    params = params_new(weights, dx, dy, z, mod, sup_dx, sup_dy, t_plus_1=p)
    if variant == "poly-clamped":
        # nudge z until no sampled value sits near a clamp switch point
        for _ in range(60):
            margin = _clamp_margin(stack, params, kind)
            if margin > 2e-3:
                break
            z = _away_from_integers(rng, 2e-3, p - 1 - 2e-3, size=shape)
            params = params_new(weights, dx, dy, z, mod, sup_dx, sup_dy, t_plus_1=p)
    upstream = Frame(hgt, wid, c, rng.uniform(-1.0, 1.0, (hgt, wid, c)))
    return stack, params, kind, upstream


def _clamp_margin(stack, params, kind) -> float:
    from .conv import _Pass

    fwd = _Pass(stack, params, InterpKind("poly"))
    vals = fwd.sup_values
    raw = fwd.points
    lo = vals.min(axis=-2)
    hi = vals.max(axis=-2)
    return float(np.minimum(np.abs(raw - lo), np.abs(raw - hi)).min())


def _objective(stack, params, kind, upstream) -> float:
    out = gdconv_forward(stack, params, kind)
    return float(np.sum(out.data * upstream.data))


def _check_gdconv_trial(
    rng, variant: str, report: dict, config_tag: str, h: float = 1e-4, entries_per_field: int = 10
):
    stack, params, kind, upstream = _sample_gdconv_config(rng, variant)
    bundle = gdconv_backward(stack, params, kind, upstream)
    raw = {
        name: getattr(params, name).data for name in
        ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy")
    }

    for name, arr in raw.items():
        grads = getattr(bundle, name).data
        flat = arr.ravel()
        count = min(entries_per_field, flat.size)
        for j in rng.choice(flat.size, size=count, replace=False):
            def with_entry(v, name=name, j=j):
                fields = {k: (a.copy() if k == name else a) for k, a in raw.items()}
                fields[name].ravel()[j] = v
                return _objective(
                    stack,
                    params_new(t_plus_1=params.t_plus_1, frozen=params.frozen, **fields),
                    kind,
                    upstream,
                )

            fd = _central_diff(with_entry, float(flat[j]), h)
            report[name].update(rel_err(float(grads.ravel()[j]), fd), config_tag)

    # source-frame gradient entries
    fidx = int(rng.integers(0, len(stack)))
    fdata = stack.frames[fidx].data
    gframe = bundle.frames[fidx].data
    count = min(entries_per_field, fdata.size)
    for j in rng.choice(fdata.size, size=count, replace=False):
        def with_frame_entry(v):
            frames = list(stack.frames)
            data = fdata.copy()
            data.ravel()[j] = v
            frames[fidx] = Frame(*stack.frames[fidx].shape, data)
            return _objective(stack_new(frames, list(stack.times)), params, kind, upstream)

        fd = _central_diff(with_frame_entry, float(fdata.ravel()[j]), h)
        report["frames"].update(rel_err(float(gframe.ravel()[j]), fd), config_tag)


# ---------------------------------------------------------------------------
# pipeline suite: predictor -> params -> warp -> charbonnier loss


def _check_pipeline_trial(
    rng, variant: str, report: dict, config_tag: str, h: float = 1e-5, n_weights: int = 24
):
    if variant == "poly-clamped":
        variant = "poly"  # clamp switch points cannot be steered from the outside
    size = int(rng.integers(6, 9))
    spec = SynthSpec(
        height=size,
        width=size,
        pattern="gaussian-blob",
        velocity=(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))),
        seed=int(rng.integers(0, 2**31)),
    )
    sample = synth_generate(spec)
    reference = [1, 2]
    generation = [0, 1, 2, 3]
    gen = substack(sample.stack, generation)
    ref = substack(sample.stack, reference)
    cfg = PredictorCfg(
        in_channels=len(generation),
        n_points=2,
        t_plus_1=len(reference),
        hidden=6,
        layers=3,
    )
    pred = ToyPredictor(cfg, seed=int(rng.integers(0, 2**31)))
    pred.params[:] = rng.normal(0.0, 0.25, pred.n_parameters)
    # keep sampling positions off the pixel lattice: bias the offset heads
    last = slice(pred.offsets[-2], pred.offsets[-1])
    head_bias = pred.params[last][-cfg.out_channels:]
    for name, cnt, start in _head_slices(cfg):
        if name in ("sup_dx", "sup_dy", "dx", "dy", "shared_dx", "shared_dy"):
            head_bias[start : start + cnt] += 0.37
    kind = InterpKind(variant)
    loss_cfg = CharbonnierCfg(epsilon=1e-3)

    def objective() -> float:
        params = pred.forward(gen)
        warped = gdconv_forward(ref, params, kind)
        loss, _ = charbonnier_with_grad(warped.data, sample.target.data, loss_cfg)
        return loss

    params, cache = pred.forward_with_cache(gen)
    warped = gdconv_forward(ref, params, kind)
    _, g_w = charbonnier_with_grad(warped.data, sample.target.data, loss_cfg)
    bundle = gdconv_backward(ref, params, kind, Frame(*warped.shape, g_w))
    g_flat = pred.backward(cache, bundle)

    for j in rng.choice(pred.n_parameters, size=min(n_weights, pred.n_parameters), replace=False):
        x0 = float(pred.params[j])
        pred.params[j] = x0 + h
        up = objective()
        pred.params[j] = x0 - h
        down = objective()
        pred.params[j] = x0
        fd = (up - down) / (2.0 * h)
        report["predictor"].update(rel_err(float(g_flat[j]), fd), config_tag)


def _head_slices(cfg: PredictorCfg):
    start = 0
    for name, cnt in cfg.head_layout():
        yield name, cnt, start
        start += cnt


# ---------------------------------------------------------------------------
# orchestration


_SUITES = {
    "interp": (_check_interp_trial, ("d_z", "d_values", "d_dx", "d_dy")),
    "sampler": (_check_sampler_trial, ("d_x", "d_y", "d_frame")),
    "gdconv": (
        _check_gdconv_trial,
        ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy", "frames"),
    ),
    "pipeline": (_check_pipeline_trial, ("predictor",)),
}

# share of the total trial budget per suite
_SPLIT = {"interp": 0.4, "sampler": 0.2, "gdconv": 0.3, "pipeline": 0.1}


def run_gradcheck(trials: int, seed: int, suites: tuple[str, ...] = tuple(_SUITES)) -> GradcheckReport:
    """Spread `trials` configurations over the suites and FD-check them all."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    report = GradcheckReport()
    trial_index = 0
    for suite in suites:
        check, names = _SUITES[suite]
        tol = TOLERANCES[suite]
        fields = {name: FieldReport(suite, name, tol) for name in names}
        count = max(1, round(trials * _SPLIT[suite])) if len(suites) > 1 else trials
        for k in range(count):
            trial_seed = seed + trial_index
            rng = np.random.default_rng(trial_seed)
            variant = VARIANTS[k % len(VARIANTS)]
            tag = f"suite={suite} kind={variant} seed={trial_seed}"
            if suite == "sampler":
                check(rng, fields, tag)
            else:
                check(rng, variant, fields, tag)
            trial_index += 1
            report.trials_run += 1
        report.fields.extend(fields.values())
    return report
