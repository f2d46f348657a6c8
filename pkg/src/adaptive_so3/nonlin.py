"""Norm and gated nonlinearities; both act on each (2l+1)-field along the last axis."""
from __future__ import annotations

import numpy as np

from . import engine

EPS_DEN = 1e-12


def norm_nonlinearity(v, sigma="relu", b=0.0):
    """v * sigma(|v| - b) / (|v| + 1e-12).

    ``b`` broadcasts against the field axis (e.g. shape (c, 1) for c fields).
    At v = 0 the output and its gradient are both zero.
    """
    act = engine.activation(sigma)
    val = v.value if isinstance(v, engine.Tensor) else np.asarray(v, dtype=float)
    alive = (np.sum(val * val, axis=-1, keepdims=True) > 0).astype(float)
    n = engine.safe_norm(v)
    factor = engine.divide(act(engine.add(n, engine.scale(b, -1.0))), engine.add(n, EPS_DEN))
    return engine.hadamard(v, engine.hadamard(factor, alive))


def gated_nonlinearity(v, s):
    """Scale each field by sigmoid of its gate scalar; ``s`` broadcasts (e.g. (c, 1))."""
    return engine.hadamard(v, engine.sigmoid(s))
