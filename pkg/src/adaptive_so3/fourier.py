"""Sampling matrices, discretised (inverse) Fourier transforms and the
fixed-grid Fourier nonlinearity.

Feature batches are row-major: ``fhat`` has shape (..., c, F) and sample
batches (..., c, N). All functions accept engine Tensors in place of arrays
for the feature argument, so the same code path is used for training.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import engine
from .reptypes import FieldType, Kind, delta_hat, rho_apply
from .rotations import Grid, Space

PINV_RCOND = 1e-10


class Mode(str, Enum):
    PINV = "pinv"
    APPROX_TRANSPOSE = "approx_transpose"


@dataclass(frozen=True, eq=False)
class SamplingMatrix:
    """N x F matrix whose rows are translated deltas rho(g_i) delta_hat.

    ``row_scale`` is the norm of the delta vector the rows were built from
    (1 for unit rows). ``grid`` is None for input-dependent matrices.
    """

    type: FieldType
    A: np.ndarray
    row_scale: float = 1.0
    grid: Grid | None = None

    @property
    def N(self) -> int:
        return self.A.shape[-2]

    @property
    def F(self) -> int:
        return self.type.F

    @property
    def adaptive(self) -> bool:
        return self.grid is None

    def approx_scale(self) -> float:
        """Factor making (scale) A^T A -> I for well-spread rows."""
        return self.F / (self.N * self.row_scale**2)

    def pinv(self) -> np.ndarray:
        return np.linalg.pinv(self.A, rcond=PINV_RCOND)

    def to_csv(self) -> str:
        lines = [",".join(f"{v:.17g}" for v in row) for row in np.atleast_2d(self.A)]
        return "\n".join(lines) + "\n"


def sampling_matrix(t: FieldType, grid: Grid, normalized: bool = False) -> SamplingMatrix:
    if grid.space == Space.SPHERE and t.kind != Kind.QUOTIENT:
        raise ValueError("sphere grids only sample quotient (S^2) types")
    delta = delta_hat(t, normalized)
    quats = grid.group_quats()
    rows = rho_apply(t, quats, np.broadcast_to(delta, (grid.N, t.F)))
    return SamplingMatrix(t, rows, float(np.linalg.norm(delta)), grid)


def _check(A: SamplingMatrix, x, what: str):
    shape = x.shape
    if shape[-1] != A.A.shape[-1]:
        raise ValueError(f"{what}: last axis {shape[-1]} does not match {A.A.shape[-1]}")


def ift(A: SamplingMatrix, fhat):
    """Sample the band-limited functions: fhat @ A^T, shape (..., c, N)."""
    fhat = fhat if isinstance(fhat, engine.Tensor) else np.asarray(fhat, dtype=float)
    if fhat.shape[-1] != A.F:
        raise ValueError(f"ift: coefficient length {fhat.shape[-1]} does not match F={A.F}")
    if fhat.ndim == 1:
        return np.asarray(fhat) @ A.A.T
    return engine.matmul(fhat, engine.transpose(A.A))


def ft_pinv(A: SamplingMatrix, samples):
    """Least-squares coefficients from samples, via the SVD pseudo-inverse."""
    samples = samples if isinstance(samples, engine.Tensor) else np.asarray(samples, dtype=float)
    if samples.shape[-1] != A.N:
        raise ValueError(f"ft_pinv: {samples.shape[-1]} samples for an N={A.N} matrix")
    pinv_t = A.pinv().T
    if samples.ndim == 1:
        return np.asarray(samples) @ pinv_t
    return engine.matmul(samples, pinv_t)


def fourier_nonlinearity(A: SamplingMatrix, fhat, sigma="elu", mode: Mode | str = Mode.PINV):
    """Pointwise sigma applied on the samples, mapped back to coefficients.

    ``pinv`` uses A^+; ``approx_transpose`` uses (F / (N |delta|^2)) A^T.
    """
    mode = Mode(mode)
    act = engine.activation(sigma)
    squeeze = not isinstance(fhat, engine.Tensor) and np.ndim(fhat) == 1
    if squeeze:
        fhat = np.asarray(fhat, dtype=float)[None, :]
    samples = act(ift(A, fhat))
    if mode == Mode.PINV:
        out = ft_pinv(A, samples)
    else:
        out = engine.scale(engine.matmul(samples, A.A), A.approx_scale())
    return out[0] if squeeze else out
