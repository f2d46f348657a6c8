import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptive_so3.rotations import (
    Grid, Rotation, Space, act_on_sphere, canonicalize_quats, compose, cubic_group, make_grid,
    min_pairwise_distance, quat_to_matrix, random_haar, random_haar_quats, repulsion_grid, rot_x, rot_z,
)

angles = st.floats(-10, 10, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)


def haar(seed):
    return random_haar(np.random.default_rng(seed))


def test_compose_identity(rng):
    r = random_haar(rng)
    assert compose(r, Rotation.identity()) == r
    assert compose(Rotation.identity(), r) == r


@given(angles, angles)
def test_z_rotations_add(a, b):
    assert compose(rot_z(a), rot_z(b)) == rot_z(a + b)


@given(seeds)
def test_compose_matches_matrix_product(seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_haar(rng), random_haar(rng)
    assert np.abs(compose(r1, r2).matrix() - r1.matrix() @ r2.matrix()).max() < 1e-12
    assert abs(np.linalg.norm(compose(r1, r2).q) - 1) < 1e-12


@given(seeds)
def test_associativity_and_inverse(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_haar(rng) for _ in range(3))
    lhs, rhs = compose(compose(a, b), c), compose(a, compose(b, c))
    assert np.abs(lhs.q - rhs.q).max() < 1e-12
    assert np.abs(compose(a, a.inverse()).q - Rotation.identity().q).max() < 1e-12


def test_canonical_sign():
    q = canonicalize_quats(np.array([[-0.5, 0.5, 0.5, 0.5], [0.0, 0.0, -1.0, 0.0], [0.0, 0.0, 0.0, -1.0]]))
    assert q[0, 0] > 0
    assert q[1, 2] == 1.0 and q[2, 3] == 1.0
    assert Rotation(-rot_x(0.3).q) == rot_x(0.3)


def test_haar_mean_and_orthogonality():
    q = random_haar_quats(np.random.default_rng(0), 100_000)
    R = quat_to_matrix(q)
    assert np.abs(R.mean(axis=0)).max() < 0.02
    eye = np.einsum("nji,njk->nik", R, R)
    assert np.abs(eye - np.eye(3)).max() < 1e-12


def test_haar_angle_density():
    q = random_haar_quats(np.random.default_rng(1), 100_000)
    theta = 2 * np.arccos(np.clip(q[:, 0], -1, 1))
    counts, edges = np.histogram(theta, bins=20, range=(0, np.pi))
    cdf = lambda t: (t - np.sin(t)) / np.pi
    expected = len(theta) * np.diff(cdf(edges))
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 45  # 19 dof, p ~ 1e-3


def test_cubic_group():
    g = cubic_group()
    assert g.N == 24
    rots = g.rotations()
    assert Rotation.identity() in rots and rot_z(np.pi / 2) in rots
    for a in rots:
        assert a.inverse() in rots
        for b in rots:
            assert compose(a, b) in rots


def test_repulsion_small():
    one = repulsion_grid(Space.SPHERE, 1)
    assert np.allclose(one.elements, [[0, 0, 1]])
    six = repulsion_grid(Space.SPHERE, 6)
    cos = np.clip(six.elements @ six.elements.T, -1, 1)
    ang = np.degrees(np.arccos(cos[~np.eye(6, dtype=bool)]))
    assert ang.min() >= 89.0


def test_repulsion_beats_random():
    rep = min_pairwise_distance(repulsion_grid(Space.SPHERE, 64))
    rand = np.median([min_pairwise_distance(make_grid("random", 64, seed=s)) for s in range(10)])
    assert rep >= 2 * rand


def test_repulsion_deterministic_and_group_antipodal():
    a = repulsion_grid.__wrapped__(Space.GROUP, 12, 200, 0.01, 3)
    b = repulsion_grid.__wrapped__(Space.GROUP, 12, 200, 0.01, 3)
    assert np.array_equal(a.elements, b.elements)
    assert np.all(a.elements[:, 0] >= 0)
    assert min_pairwise_distance(a) > 0.5


@given(seeds)
@settings(max_examples=30)
def test_act_on_sphere(seed):
    rng = np.random.default_rng(seed)
    r1, r2 = random_haar(rng), random_haar(rng)
    p = rng.standard_normal(3)
    p /= np.linalg.norm(p)
    assert np.allclose(act_on_sphere(Rotation.identity(), p), p, atol=1e-15)
    lhs = act_on_sphere(r1, act_on_sphere(r2, p))
    assert np.abs(lhs - act_on_sphere(compose(r1, r2), p)).max() < 1e-12


def test_act_quarter_turn():
    assert np.abs(act_on_sphere(rot_z(np.pi / 2), [1, 0, 0]) - [0, 1, 0]).max() < 1e-12


def test_grid_validation_and_json():
    with pytest.raises(ValueError):
        Grid(Space.SPHERE, [[0, 0, 1], [0, 0, 1]])
    with pytest.raises(ValueError):
        Grid(Space.GROUP, np.zeros((0, 4)))
    g = repulsion_grid(Space.GROUP, 5)
    back = Grid.from_json(g.to_json())
    assert back.space == Space.GROUP and np.array_equal(back.elements, g.elements)
    with pytest.raises(ValueError):
        g.elements[0, 0] = 1.0
