"""Interpolation of a space-time sample from its per-frame support points.

A sampling point at fractional time z in [0, T] is assigned a value from
the T+1 support values s^0..s^T pinned to integer times, in one of five
ways:

  * linear:       hat-weighted blend of the two adjacent supports.
  * inv3d:        inverse-squared-distance weights over all supports, with
                  normalized spatial and temporal distance components.
  * inv1d:        same, temporal distance only.
  * poly:         the unique degree-T polynomial through (i, s^i),
                  evaluated in Lagrange form.
  * poly-clamped: poly, clamped to [min_i s^i, max_i s^i].

Everything is evaluated in a vectorized form over arbitrary leading axes;
the scalar API wraps single points. Analytic partials are exact, with
deterministic one-sided conventions at the linear kinks (right-derivative,
left at z = T) and zero derivatives through an active clamp.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

VARIANTS = ("linear", "inv3d", "inv1d", "poly", "poly-clamped")


@dataclass(frozen=True)
class InterpKind:
    """Interpolation variant selector plus its numeric configuration.

    epsilon_dist guards the inverse-distance weights against an exact
    support hit; it is added to the squared distance, which keeps the
    weights finite and differentiable everywhere. The norm_* entries
    rescale the distance components; unset values resolve to the frame
    height/width and to T at the call site (1 when there is no frame).
    """

    variant: str
    epsilon_dist: float = 1e-8
    norm_h: float | None = None
    norm_w: float | None = None
    norm_t: float | None = None

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown interpolation variant {self.variant!r}")
        if self.epsilon_dist < 0:
            raise ValueError("epsilon_dist must be nonnegative")
        for name in ("norm_h", "norm_w", "norm_t"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")

    def resolved(self, n_support: int, height: int | None = None, width: int | None = None) -> "InterpKind":
        """Fill unset normalizers from the context: H, W and T."""
        return replace(
            self,
            norm_h=self.norm_h if self.norm_h is not None else float(height if height else 1.0),
            norm_w=self.norm_w if self.norm_w is not None else float(width if width else 1.0),
            norm_t=self.norm_t if self.norm_t is not None else float(max(n_support - 1, 1)),
        )

    def __str__(self) -> str:
        return self.variant


def parse_kind(name: str, epsilon_dist: float = 1e-8) -> InterpKind:
    return InterpKind(variant=name, epsilon_dist=epsilon_dist)


@dataclass(frozen=True)
class SupportSet:
    """Values and spatial offsets of the T+1 support points of one sample."""

    values: tuple[float, ...]
    dx: tuple[float, ...]
    dy: tuple[float, ...]

    def __post_init__(self) -> None:
        n = len(self.values)
        if n < 2:
            raise ValueError("need at least 2 support points")
        if len(self.dx) != n or len(self.dy) != n:
            raise ValueError("values, dx and dy must share one length")
        for seq in (self.values, self.dx, self.dy):
            if not all(np.isfinite(v) for v in seq):
                raise ValueError("support entries must be finite")


def support_set(values, dx=None, dy=None) -> SupportSet:
    n = len(values)
    zeros = (0.0,) * n
    return SupportSet(
        tuple(float(v) for v in values),
        zeros if dx is None else tuple(float(v) for v in dx),
        zeros if dy is None else tuple(float(v) for v in dy),
    )


@dataclass(frozen=True)
class InterpPartials:
    d_z: float
    d_values: tuple[float, ...]
    d_dx: tuple[float, ...]
    d_dy: tuple[float, ...]


# ---------------------------------------------------------------------------
# Lagrange basis on nodes 0..p-1 (stable for p <= 8, no linear solve)


def _lagrange_basis(z: np.ndarray, p: int, with_derivative: bool = True):
    nodes = np.arange(p, dtype=np.float64)
    diffs = z[..., None] - nodes  # (..., p)
    denom = np.empty(p)
    for i in range(p):
        denom[i] = np.prod([i - j for j in range(p) if j != i])
    basis = np.empty(diffs.shape)
    for i in range(p):
        others = [j for j in range(p) if j != i]
        basis[..., i] = np.prod(diffs[..., others], axis=-1) / denom[i]
    if not with_derivative:
        return basis, None
    dbasis = np.zeros(diffs.shape)
    for i in range(p):
        others = [j for j in range(p) if j != i]
        acc = np.zeros(z.shape)
        for k in others:
            rest = [j for j in others if j != k]
            acc = acc + (np.prod(diffs[..., rest], axis=-1) if rest else 1.0)
        dbasis[..., i] = acc / denom[i]
    return basis, dbasis


# ---------------------------------------------------------------------------
# Vectorized combine: values (..., P, C), z/dxn/dyn (...,), offsets (..., P)


@dataclass
class CombineCache:
    kind: InterpKind
    p: int
    out: np.ndarray
    z: np.ndarray
    values: np.ndarray
    # linear
    cell: np.ndarray | None = None
    frac: np.ndarray | None = None
    # inverse-distance
    w: np.ndarray | None = None
    s1: np.ndarray | None = None
    ax: np.ndarray | None = None
    ay: np.ndarray | None = None
    az: np.ndarray | None = None
    # polynomial
    basis: np.ndarray | None = None
    dbasis: np.ndarray | None = None
    raw: np.ndarray | None = None
    active: np.ndarray | None = None
    sel: np.ndarray | None = None


@dataclass
class CombineGrads:
    values: np.ndarray  # (..., P, C)
    z: np.ndarray  # (...,)
    dxn: np.ndarray
    dyn: np.ndarray
    sup_dx: np.ndarray  # (..., P)
    sup_dy: np.ndarray


def _validate_z(z: np.ndarray, p: int) -> None:
    if z.size and (z.min() < 0.0 or z.max() > p - 1):
        raise ValueError(f"temporal parameter outside [0, {p - 1}]")


def combine(
    kind: InterpKind,
    z: np.ndarray,
    dxn: np.ndarray,
    dyn: np.ndarray,
    sup_dx: np.ndarray,
    sup_dy: np.ndarray,
    values: np.ndarray,
) -> tuple[np.ndarray, CombineCache]:
    """Interpolate values (..., P, C) at times z (...,); returns (..., C).

    The kind must already be resolved (all normalizers set).
    """
    p = values.shape[-2]
    if p < 2:
        raise ValueError("need at least 2 support points")
    z = np.asarray(z, dtype=np.float64)
    _validate_z(z, p)
    variant = kind.variant

    if variant == "linear":
        cell = np.clip(np.floor(z), 0, p - 2).astype(np.int64)
        frac = z - cell
        lo = np.take_along_axis(values, cell[..., None, None], axis=-2)[..., 0, :]
        hi = np.take_along_axis(values, (cell + 1)[..., None, None], axis=-2)[..., 0, :]
        out = (1.0 - frac)[..., None] * lo + frac[..., None] * hi
        return out, CombineCache(kind, p, out, z, values, cell=cell, frac=frac)

    if variant in ("inv3d", "inv1d"):
        nodes = np.arange(p, dtype=np.float64)
        az = (z[..., None] - nodes) / kind.norm_t
        q = az * az + kind.epsilon_dist
        ax = ay = None
        if variant == "inv3d":
            ax = (np.asarray(dxn, dtype=np.float64)[..., None] - sup_dx) / kind.norm_h
            ay = (np.asarray(dyn, dtype=np.float64)[..., None] - sup_dy) / kind.norm_w
            q = q + ax * ax + ay * ay
        w = 1.0 / q
        s1 = w.sum(axis=-1)
        out = np.einsum("...p,...pc->...c", w, values) / s1[..., None]
        return out, CombineCache(kind, p, out, z, values, w=w, s1=s1, ax=ax, ay=ay, az=az)

    # poly / poly-clamped
    basis, dbasis = _lagrange_basis(z, p)
    raw = np.einsum("...p,...pc->...c", basis, values)
    if variant == "poly":
        return raw, CombineCache(kind, p, raw, z, values, basis=basis, dbasis=dbasis, raw=raw)
    lo = values.min(axis=-2)
    hi = values.max(axis=-2)
    out = np.clip(raw, lo, hi)
    below = raw < lo
    above = raw > hi
    active = below | above
    sel = np.where(above, values.argmax(axis=-2), values.argmin(axis=-2))
    return out, CombineCache(
        kind, p, out, z, values, basis=basis, dbasis=dbasis, raw=raw, active=active, sel=sel
    )


def combine_grads(cache: CombineCache, g_out: np.ndarray) -> CombineGrads:
    """Backpropagate g_out (..., C) through a combine() evaluation."""
    kind, p, z, values = cache.kind, cache.p, cache.z, cache.values
    lead = z.shape
    zeros_pt = np.zeros(lead)
    zeros_sup = np.zeros(values.shape[:-1])
    variant = kind.variant

    if variant == "linear":
        cell, frac = cache.cell, cache.frac
        g_values = np.zeros_like(values)
        np.put_along_axis(g_values, cell[..., None, None], ((1.0 - frac)[..., None] * g_out)[..., None, :], axis=-2)
        np.put_along_axis(g_values, (cell + 1)[..., None, None], (frac[..., None] * g_out)[..., None, :], axis=-2)
        lo = np.take_along_axis(values, cell[..., None, None], axis=-2)[..., 0, :]
        hi = np.take_along_axis(values, (cell + 1)[..., None, None], axis=-2)[..., 0, :]
        g_z = ((hi - lo) * g_out).sum(axis=-1)
        return CombineGrads(g_values, g_z, zeros_pt, zeros_pt.copy(), zeros_sup, zeros_sup.copy())

    if variant in ("inv3d", "inv1d"):
        w, s1 = cache.w, cache.s1
        omega = w / s1[..., None]
        g_values = omega[..., None] * g_out[..., None, :]
        # a_j = sum_c g_c (v_jc - out_c); d out / d theta = sum_j a_j dw_j/dtheta / s1
        resid = values - cache.out[..., None, :]
        a = np.einsum("...pc,...c->...p", resid, g_out) / s1[..., None]
        nodes = np.arange(p, dtype=np.float64)
        az = (z[..., None] - nodes) / kind.norm_t
        w2 = w * w
        g_z = (a * (-2.0 * w2 * az / kind.norm_t)).sum(axis=-1)
        if variant == "inv3d":
            g_sup_dx = a * (2.0 * w2 * cache.ax / kind.norm_h)
            g_sup_dy = a * (2.0 * w2 * cache.ay / kind.norm_w)
            g_dxn = -g_sup_dx.sum(axis=-1)
            g_dyn = -g_sup_dy.sum(axis=-1)
            return CombineGrads(g_values, g_z, g_dxn, g_dyn, g_sup_dx, g_sup_dy)
        return CombineGrads(g_values, g_z, zeros_pt, zeros_pt.copy(), zeros_sup, zeros_sup.copy())

    basis, dbasis = cache.basis, cache.dbasis
    poly_g_values = basis[..., None] * g_out[..., None, :]
    dz_per_c = np.einsum("...p,...pc->...c", dbasis, values)
    if variant == "poly":
        g_z = (dz_per_c * g_out).sum(axis=-1)
        return CombineGrads(poly_g_values, g_z, zeros_pt, zeros_pt.copy(), zeros_sup, zeros_sup.copy())

    # poly-clamped: through an active clamp only the clamping support value
    # carries gradient; z and offsets get zero there.
    active, sel = cache.active, cache.sel
    clamp_g = np.zeros_like(values)
    np.put_along_axis(clamp_g, sel[..., None, :], g_out[..., None, :], axis=-2)
    g_values = np.where(active[..., None, :], clamp_g, poly_g_values)
    g_z = (np.where(active, 0.0, dz_per_c * g_out)).sum(axis=-1)
    return CombineGrads(g_values, g_z, zeros_pt, zeros_pt.copy(), zeros_sup, zeros_sup.copy())


# ---------------------------------------------------------------------------
# Scalar API


def _as_arrays(support: SupportSet):
    vals = np.asarray(support.values, dtype=np.float64)[:, None]  # (P, 1)
    sdx = np.asarray(support.dx, dtype=np.float64)
    sdy = np.asarray(support.dy, dtype=np.float64)
    return vals, sdx, sdy


def interp_eval(kind: InterpKind, dx_n: float, dy_n: float, z_n: float, support: SupportSet) -> float:
    """Value of one sampling point from its support set."""
    vals, sdx, sdy = _as_arrays(support)
    rk = kind.resolved(len(support.values))
    out, _ = combine(
        rk,
        np.float64(z_n),
        np.float64(dx_n),
        np.float64(dy_n),
        sdx,
        sdy,
        vals,
    )
    return float(out[0])


def interp_partials(kind: InterpKind, dx_n: float, dy_n: float, z_n: float, support: SupportSet) -> InterpPartials:
    """Exact partials of interp_eval w.r.t. z and every support entry.

    The derivative w.r.t. the sampling point's own spatial offset equals
    minus the sum of d_dx (resp. d_dy), since only offset differences enter.
    """
    vals, sdx, sdy = _as_arrays(support)
    rk = kind.resolved(len(support.values))
    _, cache = combine(rk, np.float64(z_n), np.float64(dx_n), np.float64(dy_n), sdx, sdy, vals)
    g = combine_grads(cache, np.ones(1))
    return InterpPartials(
        d_z=float(g.z),
        d_values=tuple(float(v) for v in g.values[:, 0]),
        d_dx=tuple(float(v) for v in g.sup_dx),
        d_dy=tuple(float(v) for v in g.sup_dy),
    )
