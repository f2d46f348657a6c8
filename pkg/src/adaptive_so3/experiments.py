"""Layer- and model-level sweeps shared by the CLI and the acceptance tests."""
from __future__ import annotations

import numpy as np

from . import engine
from .adaptive import adaptive_apply, build_generator, generator_rows, normalize_rows
from .data import gen_tetris
from .diagnostics import equivariance_error, ortho_report
from .fourier import fourier_nonlinearity, sampling_matrix
from .harmonics import wigner_d_real
from .model import Classifier, ModelConfig
from .reptypes import FieldType, field_type, rho_apply
from .rotations import Space, cubic_group, make_grid, quat_to_matrix, random_haar_quats


def grid_for(t: FieldType, kind: str, N: int, seed: int = 0):
    space = Space.SPHERE if t.kind.value == "quotient" and kind != "cubic" else Space.GROUP
    return make_grid(kind, N, seed=seed, space=space)


def ortho_sweep(t: FieldType, kind: str, Ns, seed: int = 0, normalized: bool = True) -> dict[int, dict]:
    out = {}
    for N in Ns:
        rep = ortho_report(sampling_matrix(t, grid_for(t, kind, N, seed), normalized))
        out[N] = dict(eps1=rep.eps1, eps2_normalized=rep.eps2_normalized, eps2_unnormalized=rep.eps2_unnormalized)
    return out


def fixed_layer_errors(t: FieldType, N: int, n_inputs: int = 50, sigma: str = "elu", seed: int = 0,
                       kind: str = "repulsion", mode: str = "pinv", rotations=None) -> np.ndarray:
    """Per-input equivariance error of the fixed-grid layer, averaged over rotations.

    Rotations default to the 24-element cube group.
    """
    A = sampling_matrix(t, grid_for(t, kind, N), normalized=True)
    rots = cubic_group().elements if rotations is None else np.asarray(rotations)
    rng = np.random.default_rng(seed)
    f = lambda x: fourier_nonlinearity(A, x, sigma, mode)
    errs = []
    for _ in range(n_inputs):
        x = rng.standard_normal(t.F)
        e = [equivariance_error(f, x, q, apply_T=lambda v, q: rho_apply(t, q, v),
                                apply_out_T=lambda v, q: rho_apply(t, q, v)) for q in rots]
        errs.append(np.mean(e))
    return np.array(errs)


def adaptive_layer_errors(t: FieldType, N: int, n_rotations: int = 100, sigma: str = "elu", seed: int = 0,
                          c: int = 3, in_mult: int = 2) -> np.ndarray:
    """Equivariance error of the adaptive layer with A generated from rotating input fields."""
    rng = np.random.default_rng(seed)
    g = build_generator({l: in_mult for l in t.ls}, t, N, seed=seed)
    x = {l: rng.standard_normal((in_mult, 2 * l + 1)) for l in t.ls}
    fhat = rng.standard_normal((c, t.F))

    def layer(inp):
        xs, fh = inp
        A = normalize_rows(generator_rows(g, xs))
        return adaptive_apply(np.asarray(A), fh, sigma)

    def act(inp, q):
        xs, fh = inp
        return {l: xs[l] @ wigner_d_real(l, q).T for l in xs}, rho_apply(t, q, fh)

    qs = random_haar_quats(rng, n_rotations)
    return np.array([equivariance_error(layer, (x, fhat), q, apply_T=act,
                                        apply_out_T=lambda v, q: rho_apply(t, q, v)) for q in qs])


def model_invariance(config: ModelConfig, n_rotations: int = 10, n_clouds: int = 8, seed: int = 0,
                     model: Classifier | None = None) -> np.ndarray:
    model = model or Classifier(config)
    pts = gen_tetris(1, seed=seed).test_points[:n_clouds]
    qs = random_haar_quats(np.random.default_rng(seed + 1), n_rotations)
    return np.array([equivariance_error(model.logits, pts, quat_to_matrix(q), apply_T=lambda p, r: p @ r.T)
                     for q in qs])


def model_gradient_errors(config: ModelConfig, n_clouds: int = 3, max_coords: int = 12, seed: int = 0,
                          h: float = 1e-5) -> dict[str, float]:
    """Worst relative gradient error of the classifier loss for every parameter group."""
    model = Classifier(config)
    ds = gen_tetris(1, seed=seed)
    pts, labels = ds.test_points[:n_clouds], ds.test_labels[:n_clouds]
    names = list(model.params)

    def loss(*ts):
        model.params = dict(zip(names, ts))
        return engine.softmax_cross_entropy(model.forward(pts), labels)

    tensors = list(model.params.values())
    out = {}
    for group in model.param_groups():
        idx = [i for i, n in enumerate(names) if n.split(".")[0] == group]

        def partial(*sub, idx=idx):
            full = list(tensors)
            for i, t in zip(idx, sub):
                full[i] = t
            return loss(*full)

        out[group] = engine.gradient_check(partial, [tensors[i] for i in idx], h=h, max_coords=max_coords,
                                           rng=np.random.default_rng(seed))
    model.params = dict(zip(names, tensors))
    return out


def summarize(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), float(v.std())


__all__ = ["grid_for", "ortho_sweep", "fixed_layer_errors", "adaptive_layer_errors", "model_invariance",
           "summarize", "field_type"]
