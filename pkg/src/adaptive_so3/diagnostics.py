"""Orthogonality metrics for sampling matrices and the relative equivariance error."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .fourier import SamplingMatrix


class Eps2Mode(str, Enum):
    AS_IS = "as_is"
    BLOCK_RESCALED = "block_rescaled"


@dataclass(frozen=True)
class OrthoReport:
    eps1: float
    eps2_normalized: float
    eps2_unnormalized: float
    N: int
    F: int


def _matrix(A) -> np.ndarray:
    return np.asarray(A.A if isinstance(A, SamplingMatrix) else A, dtype=float)


def _unit_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


def epsilon1(A) -> float:
    """(1/N) sum_ij |A A^T - I_N| over unit-norm rows."""
    a = _unit_rows(_matrix(A))
    n = a.shape[0]
    return float(np.abs(a @ a.T - np.eye(n)).sum() / n)


def epsilon2(A, mode: Eps2Mode | str = Eps2Mode.AS_IS) -> float:
    """(1/F) sum_ij |(1/N) A^T A - I_F|.

    ``block_rescaled`` first brings every row to norm sqrt(F), the norm of an
    unnormalised delta vector, before measuring.
    """
    a = _matrix(A)
    n, f = a.shape
    if Eps2Mode(mode) == Eps2Mode.BLOCK_RESCALED:
        a = _unit_rows(a) * np.sqrt(f)
    return float(np.abs(a.T @ a / n - np.eye(f)).sum() / f)


def ortho_report(A) -> OrthoReport:
    a = _matrix(A)
    return OrthoReport(
        eps1=epsilon1(a),
        eps2_normalized=epsilon2(_unit_rows(a), Eps2Mode.AS_IS),
        eps2_unnormalized=epsilon2(a, Eps2Mode.BLOCK_RESCALED),
        N=a.shape[0],
        F=a.shape[1],
    )


def equivariance_error(
    f: Callable,
    x,
    T=None,
    apply_T: Callable | None = None,
    apply_out_T: Callable | None = None,
) -> float:
    """|apply_out_T(f(x)) - f(apply_T(x))| / max(|f(x)|, |f(T x)|).

    With ``apply_out_T`` omitted this is the invariance error. ``T`` is passed
    as the second argument to both transforms when given.
    """
    def call(fn, v):
        return fn(v) if T is None else fn(v, T)

    fx = np.asarray(f(x), dtype=float)
    ftx = np.asarray(f(call(apply_T, x)), dtype=float)
    target = fx if apply_out_T is None else np.asarray(call(apply_out_T, fx), dtype=float)
    denom = max(np.linalg.norm(fx), np.linalg.norm(ftx))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(target - ftx) / denom)
