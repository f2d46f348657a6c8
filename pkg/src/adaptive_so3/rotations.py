"""SO(3) carrier: unit quaternions, Haar sampling, the cube group and repulsion grids.

Quaternions are stored as ``(w, x, y, z)``. Batched helpers work on ``(..., 4)``
arrays so that grids of thousands of elements never go through Python loops.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Sequence

import numpy as np

_ZERO_TOL = 1e-12
NORTH = np.array([0.0, 0.0, 1.0])


def canonicalize_quats(q: np.ndarray) -> np.ndarray:
    """Normalize and fix the sign so that w >= 0.

    When w vanishes the first nonzero of (x, y, z) is made positive.
    """
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    flat = q.reshape(-1, 4).copy()
    for row in flat:
        for c in row:
            if abs(c) > _ZERO_TOL:
                if c < 0:
                    row *= -1.0
                break
    return flat.reshape(q.shape)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product, broadcasting over leading axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    m = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return m.reshape(q.shape[:-1] + (3, 3))


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to canonical quaternion (Shepperd's method)."""
    m = np.asarray(m, dtype=float)
    flat = m.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    for k, r in enumerate(flat):
        tr = np.trace(r)
        cands = np.array([tr, r[0, 0], r[1, 1], r[2, 2]])
        i = int(np.argmax(cands))
        if i == 0:
            s = 2.0 * np.sqrt(1.0 + tr)
            q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif i == 1:
            s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
            q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif i == 2:
            s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
            q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        else:
            s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
            q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        out[k] = q
    return canonicalize_quats(out).reshape(m.shape[:-2] + (4,))


def axis_angle_quat(axis: Sequence[float], angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


@dataclass(frozen=True, eq=False)
class Rotation:
    """An element of SO(3) held as a canonical unit quaternion."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).reshape(4)
        if not np.all(np.isfinite(q)) or np.linalg.norm(q) == 0:
            raise ValueError(f"invalid quaternion {q}")
        object.__setattr__(self, "q", canonicalize_quats(q))
        self.q.setflags(write=False)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "Rotation":
        return cls(axis_angle_quat(axis, angle))

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        return cls(matrix_to_quat(m))

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def inverse(self) -> "Rotation":
        return Rotation(self.q * np.array([1.0, -1.0, -1.0, -1.0]))

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return compose(self, other)

    def __eq__(self, other) -> bool:
        return isinstance(other, Rotation) and np.allclose(self.q, other.q, atol=1e-9)

    def __hash__(self):
        return hash(tuple(np.round(self.q, 9)))

    def __repr__(self):
        w, x, y, z = self.q
        return f"Rotation(w={w:.6g}, x={x:.6g}, y={y:.6g}, z={z:.6g})"


def rot_x(angle: float) -> Rotation:
    return Rotation.from_axis_angle([1, 0, 0], angle)


def rot_y(angle: float) -> Rotation:
    return Rotation.from_axis_angle([0, 1, 0], angle)


def rot_z(angle: float) -> Rotation:
    return Rotation.from_axis_angle([0, 0, 1], angle)


def compose(r1: Rotation, r2: Rotation) -> Rotation:
    """r1 after r2, i.e. matrix(r1) @ matrix(r2)."""
    return Rotation(quat_multiply(r1.q, r2.q))


def random_haar(rng: np.random.Generator) -> Rotation:
    return Rotation(_gaussian_quats(rng, 1)[0])


def random_haar_quats(rng: np.random.Generator, n: int) -> np.ndarray:
    """n Haar-distributed canonical quaternions, shape (n, 4)."""
    return canonicalize_quats(_gaussian_quats(rng, n))


def _gaussian_quats(rng, n):
    q = rng.standard_normal((n, 4))
    norms = np.linalg.norm(q, axis=1)
    # resample the (measure-zero in practice) near-origin draws
    while np.any(norms < 1e-6):
        bad = norms < 1e-6
        q[bad] = rng.standard_normal((int(bad.sum()), 4))
        norms = np.linalg.norm(q, axis=1)
    return q / norms[:, None]


def act_on_sphere(r: Rotation, p) -> np.ndarray:
    """Rotate S^2 point(s) p; p may be (3,) or (n, 3)."""
    p = np.asarray(p, dtype=float)
    out = p @ r.matrix().T
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def rotation_to_point(p) -> np.ndarray:
    """Canonical quaternions g_p with g_p . north = p, for p of shape (..., 3).

    Uses the ZY Euler choice Rz(phi) Ry(theta), so the result is smooth away
    from the south pole.
    """
    p = np.asarray(p, dtype=float)
    p = p / np.linalg.norm(p, axis=-1, keepdims=True)
    theta = np.arctan2(np.hypot(p[..., 0], p[..., 1]), p[..., 2])
    phi = np.arctan2(p[..., 1], p[..., 0])
    qz = np.stack([np.cos(phi / 2), 0 * phi, 0 * phi, np.sin(phi / 2)], axis=-1)
    qy = np.stack([np.cos(theta / 2), 0 * theta, np.sin(theta / 2), 0 * theta], axis=-1)
    return canonicalize_quats(quat_multiply(qz, qy))


class Space(str, Enum):
    GROUP = "group"
    SPHERE = "sphere"


@dataclass(frozen=True, eq=False)
class Grid:
    """A finite sample set on SO(3) (quaternions) or on S^2 (unit vectors)."""

    space: Space
    elements: np.ndarray = field(repr=False)

    def __post_init__(self):
        el = np.array(self.elements, dtype=float)
        width = 4 if self.space == Space.GROUP else 3
        if el.ndim != 2 or el.shape[1] != width or el.shape[0] < 1:
            raise ValueError(f"{self.space.value} grid needs an (N, {width}) array, got {el.shape}")
        if self.space == Space.GROUP:
            el = canonicalize_quats(el)
        else:
            el = el / np.linalg.norm(el, axis=1, keepdims=True)
        if len(np.unique(el, axis=0)) != len(el):
            raise ValueError("grid contains duplicate elements")
        el.setflags(write=False)
        object.__setattr__(self, "elements", el)

    @property
    def N(self) -> int:
        return self.elements.shape[0]

    def __len__(self):
        return self.N

    def rotations(self) -> list[Rotation]:
        return [Rotation(q) for q in self.group_quats()]

    def group_quats(self) -> np.ndarray:
        """Group elements representing the samples; sphere points are lifted."""
        if self.space == Space.GROUP:
            return self.elements
        return rotation_to_point(self.elements)

    def to_json(self) -> str:
        rows = [[float(f"{v:.17g}") for v in row] for row in self.elements]
        return json.dumps(rows)

    @classmethod
    def from_json(cls, text: str, space: Space | str | None = None) -> "Grid":
        rows = np.array(json.loads(text), dtype=float)
        if space is None:
            space = Space.GROUP if rows.shape[1] == 4 else Space.SPHERE
        return cls(Space(space), rows)


def sort_rows(el: np.ndarray) -> np.ndarray:
    order = np.lexsort(el.T[::-1])
    return el[order]


def cubic_group() -> Grid:
    """The 24 rotational symmetries of the cube."""
    gens = [rot_z(np.pi / 2).q, rot_x(np.pi / 2).q]
    found = [np.array([1.0, 0.0, 0.0, 0.0])]
    frontier = list(found)
    while frontier:
        nxt = []
        for a in frontier:
            for g in gens:
                c = canonicalize_quats(quat_multiply(g, a))
                if not any(np.allclose(c, f, atol=1e-9) for f in found):
                    found.append(c)
                    nxt.append(c)
        frontier = nxt
    el = np.array(found)
    # snap to exact values: all entries are in {0, +-1/2, +-1/sqrt2, +-1}
    for v in (0.0, 0.5, 1 / np.sqrt(2), 1.0):
        for s in (1.0, -1.0):
            el[np.abs(el - s * v) < 1e-12] = s * v
    return Grid(Space.GROUP, sort_rows(canonicalize_quats(el)))


def _repulsion_forces(x: np.ndarray, antipodal: bool) -> np.ndarray:
    # unit rows: |x_i - s x_j|^2 = 2 - 2 s <x_i, x_j>, s = sign(<x_i, x_j>) on the group
    gram = x @ x.T
    sign = np.where(gram < 0, -1.0, 1.0) if antipodal else np.ones_like(gram)
    d2 = np.maximum(2.0 - 2.0 * sign * gram, 1e-24)
    np.fill_diagonal(d2, np.inf)
    inv3 = d2 ** -1.5
    return inv3.sum(axis=1, keepdims=True) * x - (inv3 * sign) @ x


@lru_cache(maxsize=64)
def repulsion_grid(
    space: Space | str,
    N: int,
    steps: int = 500,
    step_size: float = 0.01,
    seed: int = 0,
) -> Grid:
    """Spread N particles by projected gradient descent on the Coulomb energy.

    On the sphere distances are chordal; on the group they are
    ``min(|q1 - q2|, |q1 + q2|)`` so that q and -q coincide.
    The step is cosine-decayed and each particle moves at most
    ``step_size`` times the mean force magnitude normalisation.
    """
    space = Space(space)
    if N < 1:
        raise ValueError("N must be >= 1")
    dim = 4 if space == Space.GROUP else 3
    if N == 1:
        el = np.zeros((1, dim))
        el[0, 0 if space == Space.GROUP else 2] = 1.0
        return Grid(space, el)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((N, dim))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    antipodal = space == Space.GROUP
    for t in range(steps):
        f = _repulsion_forces(x, antipodal)
        f -= np.sum(f * x, axis=1, keepdims=True) * x
        scale = np.mean(np.linalg.norm(f, axis=1))
        if scale == 0.0:
            break
        lr = step_size * 0.5 * (1.0 + np.cos(np.pi * t / steps))
        x = x + lr * f / scale
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    if antipodal:
        x = canonicalize_quats(x)
    return Grid(space, sort_rows(x))


def make_grid(kind: str, N: int, seed: int = 0, space: Space | str = Space.SPHERE, **kwargs) -> Grid:
    """Grid factory used by configs: ``repulsion``, ``cubic`` or ``random``."""
    space = Space(space)
    if kind == "repulsion":
        return repulsion_grid(space, N, seed=seed, **kwargs)
    if kind == "cubic":
        g = cubic_group()
        if space == Space.SPHERE:
            raise ValueError("the cubic grid lives on the group")
        return g
    if kind == "random":
        rng = np.random.default_rng(seed)
        if space == Space.GROUP:
            return Grid(space, random_haar_quats(rng, N))
        v = rng.standard_normal((N, 3))
        return Grid(space, v)
    raise ValueError(f"unknown grid kind {kind!r}")


def min_pairwise_distance(grid: Grid) -> float:
    x = grid.elements
    if len(x) < 2:
        return float("inf")
    if grid.space == Space.GROUP:
        g = np.abs(x @ x.T)
        d = np.sqrt(np.maximum(2 - 2 * g, 0))
    else:
        d = np.linalg.norm(x[:, None] - x[None], axis=-1)
    np.fill_diagonal(d, np.inf)
    return float(d.min())
