"""Timing protocol and nonlinear-layer cost sweep over the number of samples N."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .adaptive import adaptive_apply, normalize_rows
from .fourier import fourier_nonlinearity, sampling_matrix
from .reptypes import field_type
from .rotations import make_grid

BENCH_FIELDS = ["layer", "N", "c", "F", "m", "wall_ms", "bytes"]


@dataclass(frozen=True)
class BenchRecord:
    layer: str
    N: int
    c: int
    F: int
    m: int
    wall_ms: float
    bytes: int

    def __post_init__(self):
        if min(self.N, self.c, self.F, self.m, self.bytes) < 0 or self.wall_ms < 0:
            raise ValueError("bench record fields must be nonnegative")

    def row(self) -> str:
        return ",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in asdict(self).values())


def trimmed_mean(values: Sequence[float]) -> float:
    """Mean after dropping one highest and one lowest value."""
    v = sorted(float(x) for x in values)
    if len(v) < 3:
        raise ValueError("need at least 3 values to trim")
    return float(np.mean(v[1:-1]))


def runtime_protocol(
    run: Callable[[], object],
    epochs: int = 11,
    batches_per_epoch: int = 5,
    warmup_batches: int = 10,
    clock: Callable[[], float] = time.perf_counter,
) -> float:
    """Mean epoch time in ms: warm up, time ``epochs`` epochs, drop extremes.

    The first ``warmup_batches`` calls are discarded. Each epoch is
    ``batches_per_epoch`` calls timed together.
    """
    if epochs < 11:
        raise ValueError("runtime protocol needs at least 11 timed epochs")
    for _ in range(warmup_batches):
        run()
    times = []
    for _ in range(epochs):
        t0 = clock()
        for _ in range(batches_per_epoch):
            run()
        times.append((clock() - t0) * 1e3)
    return trimmed_mean(times)


def layer_runners(N: int, c: int, m: int, L: int = 3, seed: int = 0, sigma: str = "elu"):
    """Closures running the fixed-grid and adaptive layers on m points."""
    t = field_type("quotient", L)
    rng = np.random.default_rng(seed)
    fhat = rng.standard_normal((m, c, t.F))
    A_fixed = sampling_matrix(t, make_grid("repulsion", N, space="sphere"), normalized=True)
    A_adapt = np.asarray(normalize_rows(rng.standard_normal((m, N, t.F))))
    return {
        "fixed": lambda: fourier_nonlinearity(A_fixed, fhat, sigma, "approx_transpose"),
        "adaptive": lambda: adaptive_apply(A_adapt, fhat, sigma),
    }, t.F


def bench(
    Ns: Sequence[int] = (8, 16, 32, 64, 128),
    c: int = 16,
    m: int = 2048,
    L: int = 3,
    epochs: int = 11,
    batches_per_epoch: int = 3,
    warmup_batches: int = 10,
) -> list[BenchRecord]:
    records = []
    for N in Ns:
        runners, F = layer_runners(N, c, m, L)
        for name, run in runners.items():
            ms = runtime_protocol(run, epochs, batches_per_epoch, warmup_batches) / batches_per_epoch
            records.append(BenchRecord(name, N, c, F, m, ms, N * c * m * 8))
    return records


def linear_fit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares (slope, intercept, R^2)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_records(records: Sequence[BenchRecord]) -> dict[str, tuple[float, float, float]]:
    out = {}
    for layer in sorted({r.layer for r in records}):
        rs = [r for r in records if r.layer == layer]
        out[layer] = linear_fit([r.N for r in rs], [r.wall_ms for r in rs])
    return out
