"""Synthetic 3D tetromino-like point clouds.

Eight four-point shapes built on the unit lattice. No two of them are
congruent, not even under reflection, so an SO(3)-invariant classifier that
only sees parity-even invariants can still separate all classes.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .rotations import cubic_group, quat_to_matrix, random_haar_quats

SHAPES: dict[str, list[tuple[int, int, int]]] = {
    "line": [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0)],
    "square": [(0, 0, 0), (1, 0, 0), (0, 1, 0), (1, 1, 0)],
    "T": [(0, 0, 0), (1, 0, 0), (2, 0, 0), (1, 1, 0)],
    "L": [(0, 0, 0), (1, 0, 0), (2, 0, 0), (2, 1, 0)],
    "zigzag": [(0, 0, 0), (1, 0, 0), (1, 1, 0), (2, 1, 0)],
    "tripod": [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)],
    "screw": [(0, 0, 0), (1, 0, 0), (1, 1, 0), (1, 1, 1)],
    "tetrahedron": [(0, 0, 0), (1, 1, 0), (1, 0, 1), (0, 1, 1)],
}
CLASS_NAMES = list(SHAPES)


def normalize_cloud(p: np.ndarray) -> np.ndarray:
    """Centre and scale so the farthest point sits at distance 1."""
    p = np.asarray(p, dtype=float)
    p = p - p.mean(axis=-2, keepdims=True)
    return p / np.linalg.norm(p, axis=-1).max(axis=-1)[..., None, None]


def base_shapes() -> np.ndarray:
    return np.stack([normalize_cloud(np.array(v, dtype=float)) for v in SHAPES.values()])


@dataclass
class Dataset:
    train_points: np.ndarray  # (n, 4, 3), canonical orientation
    train_labels: np.ndarray
    test_points: np.ndarray  # (n, 4, 3), pre-rotated
    test_labels: np.ndarray
    test_rotations: np.ndarray  # (n, 4) quaternions applied to the test clouds
    rotate_train: bool = True

    def to_npz(self, path):
        np.savez(path, **{k: v for k, v in self.__dict__.items()})


def gen_tetris(n_per_class: int, jitter: float = 0.02, seed: int = 0, rotate_train: bool = True) -> Dataset:
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    base = base_shapes()
    k = len(base)

    def split():
        labels = np.repeat(np.arange(k), n_per_class)
        pts = base[labels] + jitter * rng.standard_normal((len(labels), 4, 3))
        return normalize_cloud(pts), labels

    train_pts, train_lab = split()
    test_pts, test_lab = split()
    rots = random_haar_quats(rng, len(test_lab))
    test_pts = np.einsum("nij,npj->npi", quat_to_matrix(rots), test_pts)
    return Dataset(train_pts, train_lab, test_pts, test_lab, rots, rotate_train)


def min_alignment_rmsd(a: np.ndarray, b: np.ndarray, improper: bool = False) -> float:
    """Min RMSD between two clouds over cube rotations and point relabelings."""
    mats = quat_to_matrix(cubic_group().elements)
    if improper:
        mats = np.concatenate([mats, -mats])
    best = np.inf
    for perm in permutations(range(len(b))):
        bp = b[list(perm)]
        d = np.einsum("rij,pj->rpi", mats, a) - bp
        best = min(best, float(np.sqrt((d**2).sum(axis=(1, 2)) / len(a)).min()))
    return best
