"""A small trainable convolutional map from stacked frames to warp params.

Four 3x3 same-padding convolution layers (ReLU in between) turn the
concatenated generation frames into one channel per adaptive parameter.
Raw head outputs are squashed onto their legal ranges:

  * support/sampling offsets and weights: identity plus an additive bias
    (0 for offsets, 1/N for weights) so the all-zero parameter vector
    reproduces the operator's default initialization exactly;
  * z: T * sigmoid(raw + Z_HEAD_BIAS), mod: sigmoid(raw + MOD_HEAD_BIAS).

A sigmoid cannot reach 0 or 1, so the z and mod heads start a fraction of
a percent inside their ranges rather than exactly at the default 0 and 1;
the logit biases keep that gap below 1% of the range while leaving the
heads differentiable everywhere (a hard clamp would kill gradients at the
boundary the heads start from).

The freedom variant decides which head channels exist: frozen groups come
from the variant template, shared-offset variants emit one offset pair per
sampling point and broadcast it to every support.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from ..conv import (
    Freedom,
    GDConvParams,
    GradBundle,
    SHARED_OFFSET_VARIANTS,
    freedom_frozen_fields,
    make_freedom,
    params_new,
)
from ..core import FrameStack

Z_HEAD_BIAS = -5.0
MOD_HEAD_BIAS = 5.0


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class PredictorCfg:
    in_channels: int
    n_points: int
    t_plus_1: int
    freedom: Freedom = Freedom.E
    hidden: int = 32
    layers: int = 4
    z_fixed: float = 0.0
    grid_step: float = 1.0

    def head_layout(self) -> tuple[tuple[str, int], ...]:
        """(group name, channel count) in output-channel order."""
        n, p = self.n_points, self.t_plus_1
        shared = self.freedom in SHARED_OFFSET_VARIANTS
        groups: list[tuple[str, int]] = []
        if self.freedom == Freedom.A:
            pass  # offsets fixed to the template grid
        elif shared:
            groups += [("shared_dx", n), ("shared_dy", n)]
        else:
            groups += [("sup_dx", n * p), ("sup_dy", n * p), ("dx", n), ("dy", n)]
        if "z" not in freedom_frozen_fields(self.freedom):
            groups.append(("z", n))
        groups += [("mod", n), ("weights", n)]
        return tuple(groups)

    @property
    def out_channels(self) -> int:
        return sum(c for _, c in self.head_layout())


def _layer_shapes(cfg: PredictorCfg) -> list[tuple[int, int]]:
    chans = [cfg.in_channels] + [cfg.hidden] * (cfg.layers - 1) + [cfg.out_channels]
    return [(chans[i], chans[i + 1]) for i in range(cfg.layers)]


class ToyPredictor:
    """Convolutional parameter predictor with hand-rolled backprop."""

    def __init__(self, cfg: PredictorCfg, params: np.ndarray | None = None, seed: int = 0):
        self.cfg = cfg
        self.shapes = _layer_shapes(cfg)
        sizes = [cin * cout * 9 + cout for cin, cout in self.shapes]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])
        if params is not None:
            params = np.asarray(params, dtype=np.float64).copy()
            if params.size != self.offsets[-1]:
                raise ValueError(
                    f"parameter vector has {params.size} entries, expected {self.offsets[-1]}"
                )
            self.params = params
        else:
            self.params = self._init_params(seed)

    def _init_params(self, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        chunks = []
        for li, (cin, cout) in enumerate(self.shapes):
            if li == len(self.shapes) - 1:
                w = np.zeros(cin * cout * 9)  # zero head keeps the start near the template
                b = np.zeros(cout)
                # spread the offset heads slightly: identically-initialized
                # sampling points would receive identical gradients forever
                start = 0
                for name, cnt in self.cfg.head_layout():
                    if name in ("sup_dx", "sup_dy", "dx", "dy", "shared_dx", "shared_dy"):
                        b[start : start + cnt] = rng.normal(0.0, 0.3, cnt)
                    start += cnt
            else:
                w = rng.normal(0.0, np.sqrt(2.0 / (cin * 9)), size=cin * cout * 9)
                b = np.zeros(cout)
            chunks.append(w)
            chunks.append(b)
        return np.concatenate(chunks)

    @property
    def n_parameters(self) -> int:
        return int(self.offsets[-1])

    def _layer(self, li: int) -> tuple[np.ndarray, np.ndarray]:
        cin, cout = self.shapes[li]
        chunk = self.params[self.offsets[li] : self.offsets[li + 1]]
        w = chunk[: cin * cout * 9].reshape(cin * 9, cout)
        b = chunk[cin * cout * 9 :]
        return w, b

    # -- convolution plumbing ------------------------------------------------

    @staticmethod
    def _im2col(x: np.ndarray) -> np.ndarray:
        h, w, c = x.shape
        xp = np.pad(x, ((1, 1), (1, 1), (0, 0)))
        cols = np.empty((h, w, 9, c))
        for ky in range(3):
            for kx in range(3):
                cols[:, :, ky * 3 + kx, :] = xp[ky : ky + h, kx : kx + w, :]
        return cols.reshape(h * w, 9 * c)

    @staticmethod
    def _col2im(g_cols: np.ndarray, h: int, w: int, c: int) -> np.ndarray:
        g = g_cols.reshape(h, w, 9, c)
        out = np.zeros((h + 2, w + 2, c))
        for ky in range(3):
            for kx in range(3):
                out[ky : ky + h, kx : kx + w, :] += g[:, :, ky * 3 + kx, :]
        return out[1:-1, 1:-1, :]

    def _net_forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        h, w, _ = x.shape
        trace = []
        for li in range(len(self.shapes)):
            wmat, b = self._layer(li)
            cols = self._im2col(x)
            pre = cols @ wmat + b
            last = li == len(self.shapes) - 1
            act = pre if last else np.maximum(pre, 0.0)
            trace.append((cols, pre))
            x = act.reshape(h, w, -1)
        return x, trace

    def _net_backward(self, g_out: np.ndarray, trace: list) -> np.ndarray:
        h, w, _ = g_out.shape
        g_params = np.zeros_like(self.params)
        g = g_out.reshape(h * w, -1)
        for li in reversed(range(len(self.shapes))):
            cin, cout = self.shapes[li]
            wmat, _ = self._layer(li)
            cols, pre = trace[li]
            if li != len(self.shapes) - 1:
                g = g * (pre > 0.0)
            g_w = cols.T @ g
            g_b = g.sum(axis=0)
            sl = slice(self.offsets[li], self.offsets[li + 1])
            g_params[sl] = np.concatenate([g_w.ravel(), g_b])
            if li > 0:
                g_cols = g @ wmat.T
                g = self._col2im(g_cols, h, w, cin).reshape(h * w, cin)
        return g_params

    # -- head mapping ---------------------------------------------------------

    def _heads(self, raw: np.ndarray) -> dict[str, np.ndarray]:
        out = {}
        start = 0
        for name, cnt in self.cfg.head_layout():
            out[name] = raw[:, :, start : start + cnt]
            start += cnt
        return out

    def _assemble(self, raw: np.ndarray) -> tuple[GDConvParams, dict]:
        cfg = self.cfg
        h, w, _ = raw.shape
        n, p = cfg.n_points, cfg.t_plus_1
        t = p - 1
        template = make_freedom(
            cfg.freedom, h, w, n, t, z_fixed=cfg.z_fixed, grid_step=cfg.grid_step
        )
        fields = {
            name: getattr(template, name).data.copy()
            for name in ("weights", "dx", "dy", "z", "mod", "sup_dx", "sup_dy")
        }
        heads = self._heads(raw)
        cache: dict = {"heads": heads}
        if "shared_dx" in heads:
            fields["dx"] = heads["shared_dx"]
            fields["dy"] = heads["shared_dy"]
            fields["sup_dx"] = np.repeat(heads["shared_dx"], p, axis=2)
            fields["sup_dy"] = np.repeat(heads["shared_dy"], p, axis=2)
        if "sup_dx" in heads:
            fields["sup_dx"] = heads["sup_dx"]
            fields["sup_dy"] = heads["sup_dy"]
            fields["dx"] = heads["dx"]
            fields["dy"] = heads["dy"]
        if "z" in heads:
            sig_z = _sigmoid(heads["z"] + Z_HEAD_BIAS)
            fields["z"] = t * sig_z
            cache["sig_z"] = sig_z
        sig_m = _sigmoid(heads["mod"] + MOD_HEAD_BIAS)
        fields["mod"] = sig_m
        cache["sig_m"] = sig_m
        fields["weights"] = heads["weights"] + 1.0 / n
        params = params_new(
            t_plus_1=p, frozen=freedom_frozen_fields(cfg.freedom), **fields
        )
        return params, cache

    def forward(self, generation: FrameStack) -> GDConvParams:
        params, _ = self.forward_with_cache(generation)
        return params

    def forward_with_cache(self, generation: FrameStack) -> tuple[GDConvParams, dict]:
        x = np.concatenate([f.data for f in generation.frames], axis=2)
        if x.shape[2] != self.cfg.in_channels:
            raise ValueError(
                f"predictor expects {self.cfg.in_channels} input channels, got {x.shape[2]}"
            )
        raw, trace = self._net_forward(x)
        params, cache = self._assemble(raw)
        cache["trace"] = trace
        cache["hw"] = raw.shape[:2]
        return params, cache

    def backward(self, cache: dict, bundle: GradBundle) -> np.ndarray:
        """Chain operator-parameter gradients back to the flat parameter vector."""
        cfg = self.cfg
        n, p = cfg.n_points, cfg.t_plus_1
        t = p - 1
        h, w = cache["hw"]
        g_raw = np.zeros((h, w, cfg.out_channels))
        start = 0
        for name, cnt in cfg.head_layout():
            sl = slice(start, start + cnt)
            start += cnt
            if name == "shared_dx":
                g = bundle.dx.data + bundle.sup_dx.data.reshape(h, w, n, p).sum(axis=3)
            elif name == "shared_dy":
                g = bundle.dy.data + bundle.sup_dy.data.reshape(h, w, n, p).sum(axis=3)
            elif name == "z":
                sig = cache["sig_z"]
                g = bundle.z.data * t * sig * (1.0 - sig)
            elif name == "mod":
                sig = cache["sig_m"]
                g = bundle.mod.data * sig * (1.0 - sig)
            else:
                g = getattr(bundle, name).data
            g_raw[:, :, sl] = g
        return self._net_backward(g_raw, cache["trace"])


def predictor_forward(pred: ToyPredictor, generation_frames: FrameStack) -> GDConvParams:
    """Map stacked generation frames to operator parameter fields."""
    return pred.forward(generation_frames)
