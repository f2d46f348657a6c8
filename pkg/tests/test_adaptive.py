import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_so3.adaptive import (DegenerateRowError, PerPointSamplingMatrices, adaptive_apply,
                                   adaptive_nonlinearity, build_generator, downsample_indexing, generate_A,
                                   normalize_rows)
from adaptive_so3.experiments import adaptive_layer_errors
from adaptive_so3.fourier import sampling_matrix
from adaptive_so3.harmonics import wigner_d_real
from adaptive_so3.reptypes import field_type, rho_matrix
from adaptive_so3.rotations import Space, random_haar, repulsion_grid

Q1 = field_type("quotient", 1)
Q3 = field_type("quotient", 3)


def test_missing_frequency():
    with pytest.raises(ValueError, match="input provides no frequency-2 fields"):
        build_generator({0: 1, 1: 1}, field_type("quotient", 2), 3)


def test_weight_shapes():
    g = build_generator({0: 3, 1: 2}, Q1, 4)
    assert g.W[0].shape == (4, 3) and g.W[1].shape == (4, 2)
    g = build_generator({0: 1, 1: 1}, field_type("regular", 1), 2)
    assert g.W[0].shape == (2, 1) and g.W[1].shape == (6, 1)


def test_weight_std():
    g = build_generator({0: 50, 1: 50}, Q1, 400, seed=1)
    assert abs(g.W[0].std() * np.sqrt(50) - 1) < 0.02


def test_no_extra_frequency_weights():
    from adaptive_so3.adaptive import GeneratorWeights

    with pytest.raises(ValueError):
        GeneratorWeights({0: 1, 1: 1}, Q1, 1, {0: np.ones((1, 1)), 1: np.ones((1, 1)), 2: np.ones((1, 1))})


def _fields(rng, mults, P=3):
    return {l: rng.standard_normal((P, m, 2 * l + 1)) for l, m in mults.items()}


@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]), st.sampled_from(["quotient", "regular"]))
@settings(max_examples=30)
def test_generate_A_equivariance(seed, N, kind):
    rng = np.random.default_rng(seed)
    t = field_type(kind, 2)
    mults = {l: 2 for l in t.ls}
    g = build_generator(mults, t, N, seed=seed)
    x = _fields(rng, mults)
    r = random_haar(rng)
    xr = {l: v @ wigner_d_real(l, r).T for l, v in x.items()}
    lhs = generate_A(g, xr).A
    rhs = generate_A(g, x).A @ rho_matrix(t, r).T
    assert np.abs(lhs - rhs).max() < 1e-10


def test_zero_input_degenerate():
    g = build_generator({0: 1, 1: 1}, Q1, 2)
    with pytest.raises(DegenerateRowError, match="point"):
        generate_A(g, {0: np.zeros((2, 1, 1)), 1: np.zeros((2, 1, 3))})


def test_identity_weights_single_row(rng):
    g = build_generator({0: 1, 1: 1}, Q1, 1)
    g.W[0][:] = 1.0
    g.W[1][:] = 1.0
    x = _fields(rng, {0: 1, 1: 1}, P=1)
    row = np.concatenate([x[0][0, 0], x[1][0, 0]])
    assert np.allclose(generate_A(g, x).A[0, 0], row / np.linalg.norm(row))


def test_normalize_commutes_with_rotation(rng):
    rows = rng.standard_normal((5, 16))
    R = rho_matrix(Q3, random_haar(rng))
    assert np.abs(normalize_rows(rows @ R.T) - normalize_rows(rows) @ R.T).max() < 1e-12


def test_identity_sigma_rank_one(rng):
    a = normalize_rows(rng.standard_normal((1, 16)))
    f = rng.standard_normal((3, 16))
    out = adaptive_apply(a, f, "identity")
    assert np.allclose(out, 16 * (f @ a[0])[:, None] * a[0][None, :], atol=1e-12)


def test_constant_grid_rows_recover_input(rng):
    A = sampling_matrix(Q3, repulsion_grid(Space.SPHERE, 1024), normalized=True).A
    f = rng.standard_normal((3, 16))
    As = PerPointSamplingMatrices(Q3, np.stack([A, A]))
    out = adaptive_nonlinearity(As, np.stack([f, f]), "identity")
    assert np.abs(out - f).max() < 0.05


@pytest.mark.parametrize("N", [1, 2, 4, 8])
@pytest.mark.parametrize("sigma", ["elu", "relu", "identity", "sigmoid"])
def test_layer_exactly_equivariant(N, sigma):
    assert adaptive_layer_errors(Q3, N, n_rotations=20, sigma=sigma, seed=N).max() < 1e-10


def test_downsample_indexing(rng):
    As = PerPointSamplingMatrices(Q1, normalize_rows(rng.standard_normal((5, 2, 4))))
    assert np.array_equal(downsample_indexing(As, range(5)).A, As.A)
    sub = downsample_indexing(As, [1, 3])
    assert len(sub) == 2 and np.array_equal(sub.A[1], As.A[3])
    assert sub[0].adaptive and sub[0].N == 2
    with pytest.raises(ValueError, match="empty downsample"):
        downsample_indexing(As, [])
    with pytest.raises(IndexError):
        downsample_indexing(As, [0, 5])
    with pytest.raises(ValueError):
        downsample_indexing(As, [3, 1])
    with pytest.raises(ValueError):
        adaptive_nonlinearity(As, np.zeros((4, 1, 4)))


def test_generator_gets_gradient(rng):
    from adaptive_so3 import engine
    from adaptive_so3.adaptive import generator_rows

    g = build_generator({0: 2, 1: 2}, Q1, 3, seed=2)
    g.W = {l: engine.Tensor(w, requires_grad=True) for l, w in g.W.items()}
    x = _fields(rng, {0: 2, 1: 2})
    f = rng.standard_normal((3, 2, 4))
    with engine.Tape() as tape:
        out = adaptive_apply(normalize_rows(generator_rows(g, x)), f, "elu")
        loss = engine.sum_(engine.hadamard(out, out))
    tape.backward(loss)
    assert all(np.abs(w.grad).max() > 0 for w in g.W.values())
