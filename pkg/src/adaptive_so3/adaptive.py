"""Input-dependent sampling matrices that transform as A(g.x) = A(x) rho(g)^T.

Rows are produced by a Schur-constrained linear map from the input's
frequency-l fields to the frequency-l part of each row: copies are mixed by a
real weight matrix per frequency and never across frequencies, so each output
copy rotates exactly like the input copies. Rows are then scaled to unit norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import engine
from .fourier import SamplingMatrix
from .reptypes import FieldType

DEGENERATE_ROW_TOL = 1e-8


class DegenerateRowError(ValueError):
    pass


@dataclass
class GeneratorWeights:
    """Per-frequency weights W_l of shape (N * q_l, m_l).

    ``hidden`` optionally holds a first layer (h_l, m_l) followed by a norm
    nonlinearity with biases ``hidden_bias[l]`` (squared to stay >= 0).
    """

    in_mults: dict[int, int]
    type: FieldType
    N: int
    W: dict[int, object]
    hidden: dict[int, object] | None = None
    hidden_bias: dict[int, object] | None = None

    def __post_init__(self):
        for l in self.type.ls:
            rows = self.N * self.type.multiplicity(l)
            cols = self.hidden[l].shape[0] if self.hidden else self.in_mults[l]
            if tuple(self.W[l].shape) != (rows, cols):
                raise ValueError(f"W_{l} has shape {tuple(self.W[l].shape)}, expected {(rows, cols)}")
        extra = set(self.W) - set(self.type.ls)
        if extra:
            raise ValueError(f"no weights allowed for frequencies {sorted(extra)} above L={self.type.L}")

    def parameters(self) -> list:
        out = [self.W[l] for l in self.type.ls]
        if self.hidden:
            out += [self.hidden[l] for l in self.type.ls] + [self.hidden_bias[l] for l in self.type.ls]
        return out


def _normalize_in_type(in_type) -> dict[int, int]:
    if isinstance(in_type, Mapping):
        return {int(l): int(m) for l, m in in_type.items()}
    return {int(l): int(m) for l, m in in_type}


def build_generator(in_type, t: FieldType, N: int, seed: int = 0, hidden: int | None = None) -> GeneratorWeights:
    """Random generator weights with std 1/sqrt(fan-in)."""
    mults = _normalize_in_type(in_type)
    for l in t.ls:
        if mults.get(l, 0) < 1:
            raise ValueError(f"input provides no frequency-{l} fields")
    if N < 1:
        raise ValueError("N must be >= 1")
    rng = np.random.default_rng(seed)
    hid = hb = None
    fan = dict(mults)
    if hidden:
        hid = {l: rng.standard_normal((hidden, mults[l])) / np.sqrt(mults[l]) for l in t.ls}
        hb = {l: np.full(hidden, 0.3) for l in t.ls}
        fan = {l: hidden for l in t.ls}
    W = {l: rng.standard_normal((N * t.multiplicity(l), fan[l])) / np.sqrt(fan[l]) for l in t.ls}
    return GeneratorWeights(mults, t, N, W, hid, hb)


def _norm_gate(x, bias):
    """Norm nonlinearity relu(|v| - b^2) v / |v| over the last axis."""
    n = engine.safe_norm(x)
    b = engine.hadamard(bias, bias)
    b = engine.reshape(b, (-1, 1))
    return engine.hadamard(x, engine.divide(engine.relu(engine.add(n, engine.scale(b, -1.0))), n))


def generator_rows(g: GeneratorWeights, fields: Mapping[int, object]):
    """Unnormalised rows, shape (..., N, F); fields[l] has shape (..., m_l, 2l+1)."""
    parts = []
    for l in g.type.ls:
        x = fields[l]
        if x.shape[-2:] != (g.in_mults[l], 2 * l + 1):
            raise ValueError(f"frequency-{l} input has shape {x.shape}, expected (..., {g.in_mults[l]}, {2 * l + 1})")
        if g.hidden:
            x = _norm_gate(engine.matmul(g.hidden[l], x), g.hidden_bias[l])
        y = engine.matmul(g.W[l], x)
        lead = tuple(y.shape[:-2])
        parts.append(engine.reshape(y, lead + (g.N, g.type.multiplicity(l) * (2 * l + 1))))
    return engine.concat(parts, axis=-1)


def normalize_rows(rows, check: bool = True):
    rv = rows.value if isinstance(rows, engine.Tensor) else np.asarray(rows)
    norms = np.linalg.norm(rv, axis=-1)
    if check and np.any(norms < DEGENERATE_ROW_TOL):
        bad = np.argwhere(norms < DEGENERATE_ROW_TOL)[0]
        *point, row = (int(i) for i in bad)
        raise DegenerateRowError(f"degenerate sampling row {row} at point {tuple(point)} (norm {norms[tuple(bad)]:.3g})")
    return engine.divide(rows, engine.safe_norm(rows, eps=0.0))


@dataclass(frozen=True, eq=False)
class PerPointSamplingMatrices:
    """One adaptive sampling matrix per spatial point; A has shape (P, N, F)."""

    type: FieldType
    A: np.ndarray = field(repr=False)

    def __len__(self):
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return self.A.shape[1]

    def __getitem__(self, i) -> SamplingMatrix:
        return SamplingMatrix(self.type, self.A[i], 1.0, None)


def generate_A(g: GeneratorWeights, x_fields: Mapping[int, np.ndarray]) -> PerPointSamplingMatrices:
    """Per-point unit-row sampling matrices from per-point input fields.

    ``x_fields[l]`` has shape (P, m_l, 2l+1).
    """
    fields = {l: np.asarray(x_fields[l], dtype=float) for l in g.type.ls}
    rows = generator_rows(g, fields)
    return PerPointSamplingMatrices(g.type, np.asarray(normalize_rows(rows)))


def adaptive_apply(A, fhat, sigma="elu"):
    """(F/N) sigma(fhat A^T) A for unit-row A of shape (..., N, F), fhat (..., c, F)."""
    act = engine.activation(sigma)
    n, f = A.shape[-2], A.shape[-1]
    if fhat.shape[-1] != f:
        raise ValueError(f"feature length {fhat.shape[-1]} does not match F={f}")
    samples = act(engine.matmul(fhat, engine.transpose(A)))
    return engine.scale(engine.matmul(samples, A), f / n)


def adaptive_nonlinearity(As: PerPointSamplingMatrices, fhat, sigma="elu"):
    """Apply the adaptive layer point by point; fhat has shape (P, c, F)."""
    if fhat.shape[0] != len(As):
        raise ValueError(f"{fhat.shape[0]} feature points for {len(As)} sampling matrices")
    return adaptive_apply(As.A, fhat, sigma)


def downsample_indexing(As: PerPointSamplingMatrices, kept: Sequence[int]) -> PerPointSamplingMatrices:
    kept = np.asarray(kept, dtype=int)
    if kept.size == 0:
        raise ValueError("empty downsample")
    if kept.min() < 0 or kept.max() >= len(As):
        raise IndexError(f"downsample index out of range for {len(As)} points")
    if np.any(np.diff(kept) <= 0):
        raise ValueError("downsample indices must be strictly increasing")
    return PerPointSamplingMatrices(As.type, As.A[kept])
