"""Space-time deformable convolution: forward warp and analytic backward.

Each output pixel (x, y) is a weighted, modulated sum over N sampling
points. Sampling point n carries spatial offsets (dx_n, dy_n), a fractional
time z_n in [0, T], and T+1 support points (one per source frame) with
their own spatial offsets. Support values are read from the frames by
bilinear sampling and blended over time by a pluggable interpolation
kernel, so the whole operator is differentiable in every parameter field
and in the source frames.

Support-offset fields have depth (T+1)*N laid out point-major: entry
n*(T+1)+i belongs to sampling point n, support frame i.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from enum import Enum
from pathlib import Path

import numpy as np

from .core import Field, Frame, FrameStack, field_from_array, read_field, write_field
from .interp import InterpKind, combine, combine_grads, parse_kind
from .sampler import BilinearMap

PARAM_FIELDS = ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy")


@dataclass(frozen=True, eq=False)
class GDConvParams:
    """Per-output-pixel adaptive parameter fields of the operator.

    z is clamped to [0, T] and mod to [0, 1] at construction; entries that
    were actually clamped are recorded so the backward pass can zero their
    gradients (the clamp is flat there).
    """

    n_points: int
    t_plus_1: int
    weights: Field
    dx: Field
    dy: Field
    z: Field
    mod: Field
    sup_dx: Field
    sup_dy: Field
    frozen: frozenset[str] = frozenset()
    z_locked: np.ndarray | None = None
    mod_locked: np.ndarray | None = None

    @property
    def height(self) -> int:
        return self.weights.height

    @property
    def width(self) -> int:
        return self.weights.width


@dataclass(frozen=True, eq=False)
class GradBundle:
    """Gradients of a scalar loss w.r.t. every parameter field and frame."""

    weights: Field
    dx: Field
    dy: Field
    z: Field
    mod: Field
    sup_dx: Field
    sup_dy: Field
    frames: tuple[Frame, ...]


def _as_plane(arr, height: int, width: int, depth: int, name: str) -> np.ndarray:
    if isinstance(arr, Field):
        arr = arr.data
    arr = np.asarray(arr, dtype=np.float64)
    if arr.shape != (height, width, depth):
        raise ValueError(f"{name} must have shape {(height, width, depth)}, got {arr.shape}")
    return arr


def params_new(
    weights,
    dx,
    dy,
    z,
    mod,
    sup_dx,
    sup_dy,
    t_plus_1: int,
    frozen=(),
) -> GDConvParams:
    """Validate, clamp and assemble parameter fields (arrays or Fields)."""
    wf = weights.data if isinstance(weights, Field) else np.asarray(weights, dtype=np.float64)
    if wf.ndim != 3:
        raise ValueError("weights must be an (H, W, N) field")
    h, w, n = wf.shape
    p = int(t_plus_1)
    if p < 2:
        raise ValueError("need at least 2 support frames")
    t = p - 1
    dx_a = _as_plane(dx, h, w, n, "dx")
    dy_a = _as_plane(dy, h, w, n, "dy")
    z_a = _as_plane(z, h, w, n, "z")
    mod_a = _as_plane(mod, h, w, n, "mod")
    sdx_a = _as_plane(sup_dx, h, w, n * p, "sup_dx")
    sdy_a = _as_plane(sup_dy, h, w, n * p, "sup_dy")

    z_lock = (z_a < 0.0) | (z_a > t)
    mod_lock = (mod_a < 0.0) | (mod_a > 1.0)
    z_c = np.clip(z_a, 0.0, float(t))
    mod_c = np.clip(mod_a, 0.0, 1.0)
    return GDConvParams(
        n_points=n,
        t_plus_1=p,
        weights=field_from_array(wf),
        dx=field_from_array(dx_a),
        dy=field_from_array(dy_a),
        z=field_from_array(z_c),
        mod=field_from_array(mod_c),
        sup_dx=field_from_array(sdx_a),
        sup_dy=field_from_array(sdy_a),
        frozen=frozenset(frozen),
        z_locked=z_lock if z_lock.any() else None,
        mod_locked=mod_lock if mod_lock.any() else None,
    )


def params_init(height: int, width: int, n_points: int, t: int) -> GDConvParams:
    """Identity-like start: zero offsets, z = 0, mod = 1, weights = 1/N."""
    if min(height, width, n_points, t) <= 0:
        raise ValueError("all dimensions must be positive")
    n, p = n_points, t + 1
    shape = (height, width, n)
    return params_new(
        np.full(shape, 1.0 / n),
        np.zeros(shape),
        np.zeros(shape),
        np.zeros(shape),
        np.ones(shape),
        np.zeros((height, width, n * p)),
        np.zeros((height, width, n * p)),
        t_plus_1=p,
    )


def _check_match(stack: FrameStack, params: GDConvParams) -> None:
    if params.t_plus_1 != len(stack):
        raise ValueError(
            f"params expect {params.t_plus_1} frames, stack has {len(stack)}"
        )
    if (params.height, params.width) != (stack.height, stack.width):
        raise ValueError(
            f"params are {params.height}x{params.width}, "
            f"frames are {stack.height}x{stack.width}"
        )


class _Pass:
    """Shared geometry of one forward evaluation, reused by the backward."""

    def __init__(self, stack: FrameStack, params: GDConvParams, kind: InterpKind):
        _check_match(stack, params)
        h, w, c = stack.height, stack.width, stack.channels
        n, p = params.n_points, params.t_plus_1
        self.stack, self.params = stack, params
        self.h, self.w, self.c, self.n, self.p = h, w, c, n, p
        self.kind = kind.resolved(p, height=h, width=w)

        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        sdx = params.sup_dx.data.reshape(h, w, n, p)
        sdy = params.sup_dy.data.reshape(h, w, n, p)
        pos_x = xs[:, :, None, None] + sdx
        pos_y = ys[:, :, None, None] + sdy
        self.maps = [BilinearMap(h, w, pos_x[..., i], pos_y[..., i]) for i in range(p)]
        vals = np.empty((h, w, n, p, c))
        for i in range(p):
            for ch in range(c):
                vals[..., i, ch] = self.maps[i].sample(stack.frames[i].plane(ch))
        self.sup_values = vals
        self.points, self.cache = combine(
            self.kind,
            params.z.data,
            params.dx.data,
            params.dy.data,
            sdx,
            sdy,
            vals,
        )  # (h, w, n, c)


def gdconv_forward(stack: FrameStack, params: GDConvParams, kind: InterpKind) -> Frame:
    """Synthesize a frame: sum_n W_n * interp(supports_n)(z_n) * mod_n."""
    fwd = _Pass(stack, params, kind)
    out = np.einsum(
        "hwn,hwn,hwnc->hwc", params.weights.data, params.mod.data, fwd.points
    )
    return Frame(fwd.h, fwd.w, fwd.c, out)


def gdconv_backward(
    stack: FrameStack, params: GDConvParams, kind: InterpKind, upstream: Frame
) -> GradBundle:
    """Gradients of sum(upstream * forward) w.r.t. all params and frames."""
    fwd = _Pass(stack, params, kind)
    h, w, c, n, p = fwd.h, fwd.w, fwd.c, fwd.n, fwd.p
    if upstream.shape != (h, w, c):
        raise ValueError(f"upstream must have shape {(h, w, c)}, got {upstream.shape}")
    up = upstream.data
    wn = params.weights.data
    mn = params.mod.data

    g_weights = np.einsum("hwc,hwn,hwnc->hwn", up, mn, fwd.points)
    g_mod = np.einsum("hwc,hwn,hwnc->hwn", up, wn, fwd.points)
    g_points = (wn * mn)[..., None] * up[:, :, None, :]

    cg = combine_grads(fwd.cache, g_points)
    g_z = cg.z
    g_dx, g_dy = cg.dxn, cg.dyn
    g_sup_dx, g_sup_dy = cg.sup_dx.copy(), cg.sup_dy.copy()

    g_frames = [np.zeros((h, w, c)) for _ in range(p)]
    for i in range(p):
        bm = fwd.maps[i]
        for ch in range(c):
            gv = cg.values[..., i, ch]
            _, d_x, d_y = bm.sample_with_grads(stack.frames[i].plane(ch))
            g_sup_dx[..., i] += gv * d_x
            g_sup_dy[..., i] += gv * d_y
            g_frames[i][:, :, ch] = bm.scatter(gv)

    if params.z_locked is not None:
        g_z = np.where(params.z_locked, 0.0, g_z)
    if params.mod_locked is not None:
        g_mod = np.where(params.mod_locked, 0.0, g_mod)

    grads = {
        "weights": g_weights,
        "dx": g_dx,
        "dy": g_dy,
        "z": g_z,
        "mod": g_mod,
        "sup_dx": g_sup_dx.reshape(h, w, n * p),
        "sup_dy": g_sup_dy.reshape(h, w, n * p),
    }
    for name in params.frozen:
        grads[name] = np.zeros_like(grads[name])
    return GradBundle(
        frames=tuple(Frame(h, w, c, g) for g in g_frames),
        **{k: field_from_array(v) for k, v in grads.items()},
    )


# ---------------------------------------------------------------------------
# Degenerate modes


def _kernel_grid(kernel: int) -> np.ndarray:
    r = kernel // 2
    g = np.array([(gx - r, gy - r) for gy in range(kernel) for gx in range(kernel)], dtype=np.float64)
    return g  # (kernel^2, 2) as (x, y)


def make_conventional(height: int, width: int, t: int, kernel: int, weights: Field) -> GDConvParams:
    """Fixed-grid convolution over all frames: offsets on a kernel grid,
    one integer time per frame, kernel^2 points each."""
    if kernel % 2 == 0 or kernel <= 0:
        raise ValueError("kernel must be odd and positive")
    p = t + 1
    m = kernel * kernel
    n = p * m
    if (weights.height, weights.width, weights.depth) != (height, width, n):
        raise ValueError(f"weights must have depth {n} (= (T+1)*kernel^2)")
    grid = _kernel_grid(kernel)
    off_x = np.tile(grid[:, 0], p)  # point n = i*m + g
    off_y = np.tile(grid[:, 1], p)
    z = np.repeat(np.arange(p, dtype=np.float64), m)
    shape = (height, width, n)
    dx = np.broadcast_to(off_x, shape)
    dy = np.broadcast_to(off_y, shape)
    sup_dx = np.broadcast_to(np.repeat(off_x, p), (height, width, n * p))
    sup_dy = np.broadcast_to(np.repeat(off_y, p), (height, width, n * p))
    return params_new(
        weights,
        dx,
        dy,
        np.broadcast_to(z, shape),
        np.ones(shape),
        sup_dx,
        sup_dy,
        t_plus_1=p,
    )


def make_adacof(dx_map: Field, dy_map: Field, weights: Field, t: int, m: int) -> GDConvParams:
    """Per-frame adaptive offsets with sampling pinned to integer times
    (adaptive collaboration-of-flows style): N = (T+1)*M, support offsets
    equal the sampling offsets."""
    p = t + 1
    n = p * m
    for name, fld in (("dx_map", dx_map), ("dy_map", dy_map), ("weights", weights)):
        if fld.depth != n:
            raise ValueError(f"{name} must have depth {n} (= (T+1)*M), got {fld.depth}")
    h, w = dx_map.height, dx_map.width
    z = np.broadcast_to(np.repeat(np.arange(p, dtype=np.float64), m), (h, w, n))
    sup_dx = np.repeat(dx_map.data, p, axis=2)
    sup_dy = np.repeat(dy_map.data, p, axis=2)
    return params_new(
        weights, dx_map, dy_map, z, np.ones((h, w, n)), sup_dx, sup_dy, t_plus_1=p
    )


def make_flow(flow_u: Field, flow_v: Field, source_index: int, t: int) -> GDConvParams:
    """Backward-warp one source frame by a flow field: N = 1, unit weight."""
    p = t + 1
    if not 0 <= source_index <= t:
        raise ValueError(f"source_index {source_index} out of range [0, {t}]")
    if flow_u.depth != 1 or flow_v.depth != 1:
        raise ValueError("flow fields must have depth 1")
    h, w = flow_u.height, flow_u.width
    sup_dx = np.zeros((h, w, p))
    sup_dy = np.zeros((h, w, p))
    sup_dx[:, :, source_index] = flow_u.data[:, :, 0]
    sup_dy[:, :, source_index] = flow_v.data[:, :, 0]
    shape = (h, w, 1)
    return params_new(
        np.ones(shape),
        flow_u,
        flow_v,
        np.full(shape, float(source_index)),
        np.ones(shape),
        sup_dx,
        sup_dy,
        t_plus_1=p,
    )


# ---------------------------------------------------------------------------
# Freedom ladder: progressively unfrozen parameter groups


class Freedom(str, Enum):
    """How much of the parameter space adapts.

    A: offsets fixed to a kernel grid, time fixed.
    B: one shared adaptive offset per point (broadcast to all supports), time fixed.
    C: shared adaptive offsets, adaptive time.
    D: independent support offsets, time fixed.
    E: everything adaptive.
    """

    A = "a"
    B = "b"
    C = "c"
    D = "d"
    E = "e"


_FROZEN: dict[Freedom, frozenset[str]] = {
    Freedom.A: frozenset({"dx", "dy", "sup_dx", "sup_dy", "z"}),
    Freedom.B: frozenset({"z"}),
    Freedom.C: frozenset(),
    Freedom.D: frozenset({"z"}),
    Freedom.E: frozenset(),
}

SHARED_OFFSET_VARIANTS = (Freedom.A, Freedom.B, Freedom.C)


def freedom_frozen_fields(freedom: Freedom) -> frozenset[str]:
    return _FROZEN[freedom]


def make_freedom(
    freedom: Freedom,
    height: int,
    width: int,
    n_points: int,
    t: int,
    z_fixed: float = 0.0,
    grid_step: float = 1.0,
) -> GDConvParams:
    """Template params for one freedom variant.

    Frozen groups keep their template values and receive exactly-zero
    gradients from gdconv_backward. Variant A requires n_points to be a
    perfect square so the fixed offsets form a centered grid.
    """
    base = params_init(height, width, n_points, t)
    n, p = n_points, t + 1
    z_val = float(np.clip(z_fixed, 0.0, t))
    fields = {name: getattr(base, name).data.copy() for name in PARAM_FIELDS}
    if freedom in (Freedom.A, Freedom.B, Freedom.D):
        fields["z"][:] = z_val
    if freedom == Freedom.A:
        k = int(round(np.sqrt(n)))
        if k * k != n:
            raise ValueError(f"variant A needs a square point count, got {n}")
        grid = _kernel_grid(k) * grid_step
        fields["dx"][:] = grid[:, 0]
        fields["dy"][:] = grid[:, 1]
        fields["sup_dx"][:] = np.repeat(grid[:, 0], p)
        fields["sup_dy"][:] = np.repeat(grid[:, 1], p)
    return params_new(t_plus_1=p, frozen=freedom_frozen_fields(freedom), **fields)


# ---------------------------------------------------------------------------
# Serialization: one GDCF file per field plus a JSON manifest


def save_params(params: GDConvParams, manifest_path: str | Path, interp_kind: str | InterpKind = "poly") -> None:
    manifest_path = Path(manifest_path)
    stem = manifest_path.stem
    files = {}
    for name in PARAM_FIELDS:
        fname = f"{stem}.{name}.gdcf"
        write_field(getattr(params, name), manifest_path.parent / fname)
        files[name] = fname
    manifest = {
        "format": "gdconv-params-v1",
        "n_points": params.n_points,
        "t_plus_1": params.t_plus_1,
        "height": params.height,
        "width": params.width,
        "interp_kind": str(interp_kind),
        "frozen": sorted(params.frozen),
        "fields": files,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")


def load_params(manifest_path: str | Path) -> tuple[GDConvParams, InterpKind]:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    fields = {
        name: read_field(manifest_path.parent / manifest["fields"][name])
        for name in PARAM_FIELDS
    }
    params = params_new(
        t_plus_1=int(manifest["t_plus_1"]),
        frozen=frozenset(manifest.get("frozen", ())),
        **fields,
    )
    if params.n_points != int(manifest["n_points"]):
        raise ValueError("manifest n_points disagrees with field depth")
    if (params.height, params.width) != (int(manifest["height"]), int(manifest["width"])):
        raise ValueError("manifest dimensions disagree with field shape")
    return params, parse_kind(manifest["interp_kind"])
