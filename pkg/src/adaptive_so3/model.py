"""Equivariant point-cloud classifier with a shared adaptive sampling branch.

Main branch: harmonic lift -> [equivariant linear -> nonlinearity -> FPS]
x len(widths) -> invariant pooling -> dense head. With the adaptive
nonlinearity a sampling branch turns the lifted fields into one sampling
matrix per point; the matrices follow the points through every FPS step by
indexing.

Tensors are batched over clouds: positions (B, P, 3) and a field bundle maps
each frequency l to an array (B, P, m_l, 2l+1).
"""
from __future__ import annotations

import math
from typing import Literal, Mapping

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import engine
from .adaptive import GeneratorWeights, build_generator, generator_rows, normalize_rows
from .fourier import Mode, SamplingMatrix, fourier_nonlinearity, sampling_matrix
from .harmonics import real_sph_harm, wigner_d_real
from .nonlin import gated_nonlinearity, norm_nonlinearity
from .reptypes import FieldType, Kind
from .rotations import Space, make_grid

FieldBundle = dict  # l -> (..., m_l, 2l+1)

Nonlinearity = Literal["fourier_fixed", "adaptive", "norm", "gated"]


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    nonlinearity: Nonlinearity = "adaptive"
    N: int = Field(2, ge=1)
    grid: Literal["repulsion", "random", "cubic"] = "repulsion"
    grid_seed: int = 0
    fourier_mode: Literal["pinv", "approx_transpose"] = "pinv"
    normalized_delta: bool = True
    carrier: Literal["quotient", "regular"] = "quotient"
    L: int = Field(3, ge=0, le=8)
    sigma: Literal["elu", "relu", "identity", "sigmoid"] = "elu"
    widths: list[int] = [8, 16, 32]
    ratios: list[float] = [0.5, 0.5, 0.5]
    radius: float = Field(2.0, gt=0)
    n_radial: int = Field(4, ge=1)
    dense: list[int] = [64, 32]
    n_classes: int = Field(8, ge=2)
    shared_generator: bool = True
    generator_hidden: int | None = None
    seed: int = 0
    calibrate_init: bool = True

    @field_validator("widths", "dense")
    @classmethod
    def _positive(cls, v):
        if not v or any(w < 1 for w in v):
            raise ValueError("widths must be >= 1")
        return v

    @field_validator("ratios")
    @classmethod
    def _ratios(cls, v):
        if any(not 0 < r <= 1 for r in v):
            raise ValueError("FPS ratios must lie in (0, 1]")
        return v

    def carrier_type(self) -> FieldType:
        return FieldType(Kind(self.carrier), self.L)


# ---------------------------------------------------------------- lift / linear


def hat_weights(r: np.ndarray, radius: float, n_radial: int) -> np.ndarray:
    """Hat functions over n_radial uniform bins on [0, radius]; shape r.shape + (n_radial,)."""
    r = np.asarray(r, dtype=float)
    if n_radial == 1:
        return np.clip(1.0 - r / radius, 0.0, None)[..., None]
    width = radius / (n_radial - 1)
    centers = np.arange(n_radial) * width
    return np.clip(1.0 - np.abs(r[..., None] - centers) / width, 0.0, None)


def harmonic_lift(points, radius: float, n_radial: int, L: int) -> FieldBundle:
    """Sum of radial-hat-weighted spherical harmonics over each point's ball.

    ``points`` is (P, 3) or (B, P, 3). Self pairs are skipped and an empty
    neighbourhood yields zero fields.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 2
    if single:
        pts = pts[None]
    rel = pts[:, None, :, :] - pts[:, :, None, :]  # rel[b, i, j] = p_j - p_i
    dist = np.linalg.norm(rel, axis=-1)
    mask = (dist > 0) & (dist <= radius)
    w = hat_weights(dist, radius, n_radial) * mask[..., None]
    unit = np.where(mask[..., None], rel, np.array([0.0, 0.0, 1.0]))
    out = {}
    for l in range(L + 1):
        y = real_sph_harm(l, unit)
        out[l] = np.einsum("bijr,bijm->birm", w, y)
    if single:
        out = {l: v[0] for l, v in out.items()}
    return out


def rotate_bundle(bundle: Mapping[int, np.ndarray], r) -> FieldBundle:
    return {l: np.asarray(x) @ wigner_d_real(l, r).T for l, x in bundle.items()}


def equivariant_linear(W: Mapping[int, object], bundle: Mapping[int, object], bias=None) -> FieldBundle:
    """Per frequency: out copies = W_l @ in copies. ``bias`` (m_0,) is added to l=0."""
    out = {}
    for l, x in bundle.items():
        if l not in W:
            continue
        w = W[l]
        if w.shape[-1] != x.shape[-2]:
            raise ValueError(f"W_{l} expects {w.shape[-1]} input copies, bundle has {x.shape[-2]}")
        y = engine.matmul(w, x)
        if l == 0 and bias is not None:
            y = engine.add(y, engine.reshape(bias, (-1, 1)))
        out[l] = y
    return out


# ---------------------------------------------------------------- FPS / pooling

_FPS_TIE = 1e-9


def fps(points, ratio: float) -> list[int]:
    """Farthest-point sampling, returned in selection order.

    Starts from the point farthest from the centroid; distances within 1e-9
    (relative) of the maximum count as ties and go to the lowest index.
    """
    if not 0 < ratio <= 1:
        raise ValueError("ratio must lie in (0, 1]")
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    k = max(1, math.ceil(ratio * n))
    centroid = pts.mean(axis=0)

    def pick(d):
        top = d.max()
        return int(np.flatnonzero(d >= top - _FPS_TIE * max(top, 1.0))[0])

    first = pick(np.linalg.norm(pts - centroid, axis=1))
    chosen = [first]
    mind = np.linalg.norm(pts - pts[first], axis=1)
    mind[first] = -np.inf
    while len(chosen) < k:
        nxt = pick(mind)
        chosen.append(nxt)
        mind = np.minimum(mind, np.linalg.norm(pts - pts[nxt], axis=1))
        mind[chosen] = -np.inf
    return chosen


def invariant_pool(bundle: Mapping[int, object]):
    """Mean over points of l=0 channels, then mean norms of every l >= 1 field.

    Works on (P, m_l, 2l+1) or batched (B, P, m_l, 2l+1) bundles.
    """
    parts = []
    for l in sorted(bundle):
        x = bundle[l]
        axis = x.ndim - 3
        if l == 0:
            v = engine.reshape(x, tuple(x.shape[:-1]))
        else:
            v = engine.safe_norm(x, keepdims=False)
        parts.append(engine.mean(v, axis=axis))
    return engine.concat(parts, axis=-1)


# ---------------------------------------------------------------- parameters


class Classifier:
    """Parameters plus forward pass for a :class:`ModelConfig`."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.t = config.carrier_type()
        self._fixed_A: SamplingMatrix | None = None
        shapes = self.param_shapes()
        fresh = params is None
        if fresh:
            params = self._init_params(shapes)
        missing = set(shapes) - set(params)
        extra = set(params) - set(shapes)
        if missing or extra:
            raise ValueError(f"weights do not match config: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, shape in shapes.items():
            if tuple(np.shape(params[name])) != shape:
                raise ValueError(f"weight {name} has shape {np.shape(params[name])}, expected {shape}")
        self.params = {k: engine.Tensor(np.array(params[k], dtype=float), requires_grad=True, name=k) for k in shapes}
        if fresh and config.calibrate_init:
            self.calibrate()

    # -- layout

    def out_mults(self, c: int) -> dict[int, int]:
        cfg = self.config
        if cfg.nonlinearity in ("fourier_fixed", "adaptive"):
            return {l: c * self.t.multiplicity(l) for l in self.t.ls}
        if cfg.nonlinearity == "gated":
            return {0: c * (1 + cfg.L), **{l: c for l in range(1, cfg.L + 1)}}
        return {l: c for l in range(cfg.L + 1)}

    def post_mults(self, c: int) -> dict[int, int]:
        if self.config.nonlinearity == "gated":
            return {l: c for l in range(self.config.L + 1)}
        return self.out_mults(c)

    def param_shapes(self) -> dict[str, tuple]:
        cfg = self.config
        shapes: dict[str, tuple] = {}
        in_m = {l: cfg.n_radial for l in range(cfg.L + 1)}
        gen_inputs = []
        for b, c in enumerate(cfg.widths):
            gen_inputs.append(dict(in_m))
            out_m = self.out_mults(c)
            for l in range(cfg.L + 1):
                shapes[f"block{b}.W{l}"] = (out_m[l], in_m[l])
            shapes[f"block{b}.bias"] = (out_m[0],)
            if cfg.nonlinearity == "norm":
                for l in range(1, cfg.L + 1):
                    shapes[f"block{b}.normbias{l}"] = (c,)
            in_m = self.post_mults(c)
        if cfg.nonlinearity == "adaptive":
            n_gen = 1 if cfg.shared_generator else len(cfg.widths)
            for k in range(n_gen):
                for l in self.t.ls:
                    fan = cfg.generator_hidden or gen_inputs[k][l]
                    shapes[f"gen{k}.W{l}"] = (cfg.N * self.t.multiplicity(l), fan)
                    if cfg.generator_hidden:
                        shapes[f"gen{k}.H{l}"] = (cfg.generator_hidden, gen_inputs[k][l])
                        shapes[f"gen{k}.Hbias{l}"] = (cfg.generator_hidden,)
        width = sum(in_m.values())
        for k, h in enumerate(cfg.dense + [cfg.n_classes]):
            shapes[f"dense{k}.W"] = (width, h)
            shapes[f"dense{k}.b"] = (h,)
            width = h
        return shapes

    def _init_params(self, shapes) -> dict[str, np.ndarray]:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        out = {}
        for name, shape in shapes.items():
            leaf = name.split(".")[1]
            if leaf in ("bias", "b"):
                out[name] = np.zeros(shape)
            elif leaf.startswith("normbias") or leaf.startswith("Hbias"):
                out[name] = np.full(shape, 0.3)
            elif name.startswith("dense"):
                out[name] = rng.standard_normal(shape) * np.sqrt(2.0 / shape[0])
            else:
                out[name] = rng.standard_normal(shape) / np.sqrt(shape[1])
        return out

    def calibrate(self, points=None, iters: int = 3) -> list[float]:
        """Rescale block and dense weights so every layer output has unit RMS.

        Layer-sequential unit-variance init on a seeded batch of random clouds.
        Scalar rescaling keeps every layer equivariant. Returns the final RMS per
        block followed by the RMS per dense layer (pre-activation).
        """
        if points is None:
            rng = np.random.default_rng(self.config.seed + 104729)
            # inside a ball of 0.4 radius every pair are neighbours, so no field vanishes
            v = rng.standard_normal((16, 4, 3))
            v *= 0.4 * self.config.radius * rng.uniform(0.2, 1.0, (16, 4, 1)) / np.linalg.norm(v, axis=-1, keepdims=True)
            points = v
        rms = []
        for b in range(len(self.config.widths)):
            for _ in range(iters):
                r = self.forward(points, return_trace=True)[1]["rms"][b]
                if not np.isfinite(r) or r == 0.0:
                    break
                for l in range(self.config.L + 1):
                    w = self.params[f"block{b}.W{l}"]
                    w.value = w.value / r
            rms.append(self.forward(points, return_trace=True)[1]["rms"][b])
        for k in range(len(self.config.dense) + 1):
            for _ in range(iters):
                r = self.forward(points, return_trace=True)[1]["dense_rms"][k]
                if not np.isfinite(r) or r == 0.0:
                    break
                w = self.params[f"dense{k}.W"]
                w.value = w.value / r
            rms.append(self.forward(points, return_trace=True)[1]["dense_rms"][k])
        return rms

    def parameters(self) -> list[engine.Tensor]:
        return list(self.params.values())

    def param_groups(self) -> dict[str, list[engine.Tensor]]:
        groups: dict[str, list] = {}
        for name, p in self.params.items():
            groups.setdefault(name.split(".")[0], []).append(p)
        return groups

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params.items()}

    # -- sampling

    def fixed_sampling_matrix(self) -> SamplingMatrix:
        if self._fixed_A is None:
            cfg = self.config
            space = Space.SPHERE if self.t.kind == Kind.QUOTIENT and cfg.grid != "cubic" else Space.GROUP
            grid = make_grid(cfg.grid, cfg.N, seed=cfg.grid_seed, space=space)
            self._fixed_A = sampling_matrix(self.t, grid, cfg.normalized_delta)
        return self._fixed_A

    def generator(self, k: int) -> GeneratorWeights:
        cfg = self.config
        W = {l: self.params[f"gen{k}.W{l}"] for l in self.t.ls}
        hidden = hb = None
        if cfg.generator_hidden:
            hidden = {l: self.params[f"gen{k}.H{l}"] for l in self.t.ls}
            hb = {l: self.params[f"gen{k}.Hbias{l}"] for l in self.t.ls}
        in_m = {l: self.params[f"gen{k}.H{l}" if cfg.generator_hidden else f"gen{k}.W{l}"].shape[1] for l in self.t.ls}
        return GeneratorWeights(in_m, self.t, cfg.N, W, hidden, hb)

    def sampling_branch(self, bundle: FieldBundle, k: int = 0):
        """Unit-row sampling matrices (B, P, N, F) from a bundle."""
        rows = generator_rows(self.generator(k), {l: bundle[l] for l in self.t.ls})
        return normalize_rows(rows)

    # -- carriers

    def to_carrier(self, bundle: FieldBundle, c: int):
        parts = []
        for l in self.t.ls:
            x = bundle[l]
            lead = tuple(x.shape[:-2])
            parts.append(engine.reshape(x, lead + (c, self.t.multiplicity(l) * (2 * l + 1))))
        return engine.concat(parts, axis=-1)

    def from_carrier(self, f, c: int) -> FieldBundle:
        out = {}
        lead = tuple(f.shape[:-2])
        for l in self.t.ls:
            part = engine.slice_(f, (Ellipsis, self.t.freq_slice(l)))
            out[l] = engine.reshape(part, lead + (c * self.t.multiplicity(l), 2 * l + 1))
        return out

    def nonlinearity(self, bundle: FieldBundle, b: int, c: int, A=None) -> FieldBundle:
        cfg = self.config
        kind = cfg.nonlinearity
        if kind == "fourier_fixed":
            f = self.to_carrier(bundle, c)
            return self.from_carrier(fourier_nonlinearity(self.fixed_sampling_matrix(), f, cfg.sigma, Mode(cfg.fourier_mode)), c)
        if kind == "adaptive":
            from .adaptive import adaptive_apply

            f = self.to_carrier(bundle, c)
            return self.from_carrier(adaptive_apply(A, f, cfg.sigma), c)
        if kind == "norm":
            out = {0: engine.elu(bundle[0])}
            for l in range(1, cfg.L + 1):
                beta = self.params[f"block{b}.normbias{l}"]
                bias = engine.reshape(engine.hadamard(beta, beta), (-1, 1))
                out[l] = norm_nonlinearity(bundle[l], "relu", bias)
            return out
        # gated
        x0 = bundle[0]
        out = {0: engine.elu(engine.slice_(x0, (Ellipsis, slice(0, c), slice(None))))}
        for l in range(1, cfg.L + 1):
            gate = engine.slice_(x0, (Ellipsis, slice(c * l, c * (l + 1)), slice(None)))
            out[l] = gated_nonlinearity(bundle[l], gate)
        return out

    # -- forward

    def forward(self, points, return_trace: bool = False):
        """Logits (B, n_classes) for clouds of shape (B, P, 3) or (P, 3)."""
        cfg = self.config
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 2
        if single:
            pts = pts[None]
        pts = pts - pts.mean(axis=1, keepdims=True)
        bundle = harmonic_lift(pts, cfg.radius, cfg.n_radial, cfg.L)
        A = None
        trace = {"A": [], "kept": [], "rms": [], "dense_rms": []}
        if cfg.nonlinearity == "adaptive" and cfg.shared_generator:
            A = self.sampling_branch(bundle, 0)
        for b, c in enumerate(cfg.widths):
            if cfg.nonlinearity == "adaptive" and not cfg.shared_generator:
                A = self.sampling_branch(bundle, b)
            W = {l: self.params[f"block{b}.W{l}"] for l in range(cfg.L + 1)}
            bundle = equivariant_linear(W, bundle, self.params[f"block{b}.bias"])
            if A is not None:
                trace["A"].append(A.value if isinstance(A, engine.Tensor) else A)
            bundle = self.nonlinearity(bundle, b, c, A)
            if return_trace:
                sq = sum(float(np.sum(engine._val(x) ** 2)) for x in bundle.values())
                n = sum(engine._val(x).size for x in bundle.values())
                trace["rms"].append(np.sqrt(sq / n))
            kept = np.stack([np.sort(fps(p, cfg.ratios[b])) for p in pts])
            trace["kept"].append(kept)
            pts = pts[np.arange(len(pts))[:, None], kept]
            bundle = {l: engine.gather(x, kept) for l, x in bundle.items()}
            if A is not None:
                A = engine.gather(A, kept)
        h = invariant_pool(bundle)
        n_dense = len(cfg.dense) + 1
        for k in range(n_dense):
            h = engine.add(engine.matmul(h, self.params[f"dense{k}.W"]), self.params[f"dense{k}.b"])
            if return_trace:
                trace["dense_rms"].append(float(np.sqrt(np.mean(engine._val(h) ** 2))))
            if k < n_dense - 1:
                h = engine.relu(h)
        if single:
            h = engine.slice_(h, 0)
        return (h, trace) if return_trace else h

    __call__ = forward

    def logits(self, points) -> np.ndarray:
        out = self.forward(points)
        return out.value if isinstance(out, engine.Tensor) else np.asarray(out)
