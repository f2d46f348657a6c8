import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from adaptive_so3 import engine
from adaptive_so3.experiments import model_gradient_errors, model_invariance
from adaptive_so3.model import (Classifier, ModelConfig, equivariant_linear, fps, harmonic_lift, invariant_pool,
                                rotate_bundle)
from adaptive_so3.rotations import random_haar, random_haar_quats, quat_to_matrix

seeds = st.integers(0, 2**32 - 1)
SMALL = dict(widths=[2, 3], dense=[5], L=2)


def cloud(rng, n=6):
    return rng.standard_normal((n, 3)) * 0.5


def test_lift_single_neighbour_along_z():
    b = harmonic_lift(np.array([[0, 0, 0], [0, 0, 0.5]]), 1.0, 3, 3)
    for l in range(4):
        v = b[l][0]
        assert np.all(np.abs(np.delete(v, l, axis=-1)) < 1e-14)
        assert np.abs(v[:, l]).max() > 0


def test_lift_isolated_point_zero():
    b = harmonic_lift(np.array([[0, 0, 0], [5, 0, 0]]), 1.0, 3, 2)
    for l in range(3):
        assert np.all(b[l] == 0)


@given(seeds)
@settings(max_examples=25)
def test_lift_equivariant(seed):
    rng = np.random.default_rng(seed)
    p, r = cloud(rng), random_haar(rng)
    lhs = harmonic_lift(p @ r.matrix().T, 1.0, 4, 3)
    rhs = rotate_bundle(harmonic_lift(p, 1.0, 4, 3), r)
    assert max(np.abs(lhs[l] - rhs[l]).max() for l in lhs) < 1e-10


def test_linear_examples(rng):
    x = {0: rng.standard_normal((5, 3, 1)), 1: rng.standard_normal((5, 2, 3))}
    W = {0: rng.standard_normal((4, 3)), 1: rng.standard_normal((2, 2))}
    out = equivariant_linear(W, x)
    assert np.allclose(out[0][..., 0], x[0][..., 0] @ W[0].T)
    ident = equivariant_linear({0: np.eye(3), 1: np.eye(2)}, x)
    assert all(np.array_equal(ident[l], x[l]) for l in x)
    with pytest.raises(ValueError):
        equivariant_linear({0: np.ones((2, 2))}, x)
    r = random_haar(rng)
    lhs = equivariant_linear(W, rotate_bundle(x, r))
    rhs = rotate_bundle(out, r)
    assert max(np.abs(lhs[l] - rhs[l]).max() for l in x) < 1e-10


def test_fps_examples():
    pts = np.array([[0, 0, 0], [3, 0, 0], [1, 0, 0], [1, 0, 0.0], [-1, 0, 0]])
    order = fps(pts, 1.0)
    assert sorted(order) == list(range(5)) and order[0] == 1
    # points 2 and 3 coincide: the lower index is chosen first
    assert order.index(2) < order.index(3)
    with pytest.raises(ValueError):
        fps(pts, 0.0)


@given(seeds, st.sampled_from([0.25, 0.5, 0.75, 1.0]))
@settings(max_examples=40)
def test_fps_rotation_invariant(seed, ratio):
    rng = np.random.default_rng(seed)
    p = cloud(rng, 9)
    assert fps(p, ratio) == fps(p @ random_haar(rng).matrix().T, ratio)


def test_pool_examples(rng):
    x = {0: rng.standard_normal((4, 3, 1))}
    assert np.allclose(invariant_pool(x), x[0][..., 0].mean(0))
    z = {0: np.zeros((4, 2, 1)), 1: np.zeros((4, 2, 3))}
    assert np.abs(invariant_pool(z)).max() < 1e-11
    b = harmonic_lift(cloud(rng), 1.0, 3, 2)
    r = random_haar(rng)
    assert np.abs(invariant_pool(b) - invariant_pool(rotate_bundle(b, r))).max() < 1e-10


def test_config_validation():
    with pytest.raises(ValidationError):
        ModelConfig(widths=[0, 2])
    with pytest.raises(ValidationError):
        ModelConfig(ratios=[0.0])
    with pytest.raises(ValidationError):
        ModelConfig(bogus=1)


def test_weight_mismatch():
    m = Classifier(ModelConfig(**SMALL))
    params = m.state_arrays()
    params.pop("dense0.b")
    with pytest.raises(ValueError, match="missing"):
        Classifier(ModelConfig(**SMALL), params)
    bad = m.state_arrays()
    bad["block0.W0"] = np.zeros((1, 1))
    with pytest.raises(ValueError, match="shape"):
        Classifier(ModelConfig(**SMALL), bad)


def test_calibrated_init_unit_rms():
    m = Classifier(ModelConfig(nonlinearity="adaptive"))
    assert np.allclose(m.calibrate(iters=0), 1.0, atol=0.02)


@pytest.mark.parametrize("kw", [dict(nonlinearity="adaptive", N=1), dict(nonlinearity="adaptive", N=2),
                                dict(nonlinearity="adaptive", N=8, carrier="regular", L=2),
                                dict(nonlinearity="adaptive", shared_generator=False, generator_hidden=4),
                                dict(nonlinearity="norm"), dict(nonlinearity="gated")])
def test_exact_model_invariance(kw):
    assert model_invariance(ModelConfig(**kw), n_rotations=50).max() < 1e-6


def test_fixed_grid_model_not_invariant():
    assert model_invariance(ModelConfig(nonlinearity="fourier_fixed", N=2), n_rotations=10).max() > 1e-3


def test_sampling_branch_follows_points(rng):
    m = Classifier(ModelConfig(nonlinearity="adaptive", N=2))
    pts = rng.standard_normal((2, 8, 3)) * 0.4
    _, tr = m.forward(pts, return_trace=True)
    assert len(tr["A"]) == 3 and tr["A"][0].shape == (2, 8, 2, 16)
    first = np.asarray(tr["A"][0])
    k0 = tr["kept"][0]
    assert np.array_equal(np.asarray(tr["A"][1]), first[np.arange(2)[:, None], k0])


@pytest.mark.parametrize("nl", ["adaptive", "fourier_fixed", "norm", "gated"])
def test_model_gradients(nl):
    """Gradients against central differences, with an absolute floor for roundoff.

    At h = 1e-5 one ulp of an O(1) loss is ~2e-11 in the difference quotient,
    so coordinates with tiny gradients are compared in absolute terms.
    """
    m = Classifier(ModelConfig(nonlinearity=nl, N=2, **SMALL))
    from adaptive_so3.data import gen_tetris

    ds = gen_tetris(1, seed=0)
    pts, lab = ds.test_points[:3], ds.test_labels[:3]
    with engine.Tape() as t:
        loss = engine.softmax_cross_entropy(m.forward(pts), lab)
    t.backward(loss)
    for name, p in m.params.items():
        flat = p.value.reshape(-1)
        for i in range(0, flat.size, max(1, flat.size // 6)):
            o = flat[i]
            flat[i] = o + 1e-5
            fp = float(engine.softmax_cross_entropy(m.logits(pts), lab))
            flat[i] = o - 1e-5
            fm = float(engine.softmax_cross_entropy(m.logits(pts), lab))
            flat[i] = o
            num = (fp - fm) / 2e-5
            an = p.grad.reshape(-1)[i]
            assert abs(an - num) <= 1e-4 * max(abs(an), abs(num)) + 1e-9, name


def test_gradient_check_adaptive_groups():
    errs = model_gradient_errors(ModelConfig(nonlinearity="adaptive", N=2, **SMALL), max_coords=8)
    assert "gen0" in errs and max(errs.values()) < 1e-4
