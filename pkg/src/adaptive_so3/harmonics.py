"""Real Wigner-D matrices and real spherical harmonics for SO(3).

Basis ordering is m = -l..l. The real basis is the usual real-harmonic one,
so for l = 1 the slots (m=-1, m=0, m=1) carry the axes (y, z, x).

D^l(R) is assembled from ZYZ Euler angles as
``exp(a Gz) exp(b Gy) exp(c Gz)`` where Gz, Gy are the real generators
obtained from the angular-momentum matrices by the complex-to-real change of
basis. Each exponential is evaluated from a cached eigendecomposition, which
keeps everything vectorised over batches of rotations.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .rotations import Rotation, quat_to_matrix

L_MAX = 8
_GIMBAL_TOL = 1e-9


def _check_l(l: int) -> int:
    l = int(l)
    if not 0 <= l <= L_MAX:
        raise ValueError(f"frequency l={l} outside supported range 0..{L_MAX}")
    return l


@lru_cache(maxsize=None)
def complex_to_real(l: int) -> np.ndarray:
    """Unitary U with Y_real = U @ Y_complex (Condon-Shortley complex harmonics)."""
    d = 2 * l + 1
    u = np.zeros((d, d), dtype=complex)
    s2 = 1 / np.sqrt(2)
    for m in range(-l, l + 1):
        i = m + l
        if m > 0:
            u[i, m + l] = (-1) ** m * s2
            u[i, -m + l] = s2
        elif m < 0:
            u[i, -m + l] = -1j * (-1) ** m * s2
            u[i, m + l] = 1j * s2
        else:
            u[i, l] = 1.0
    return u


@lru_cache(maxsize=None)
def real_generators(l: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Real antisymmetric (Gx, Gy, Gz) with D^l(exp(t K_k)) = exp(t G_k)."""
    d = 2 * l + 1
    m = np.arange(-l, l + 1)
    jp = np.zeros((d, d))
    for k in range(d - 1):
        jp[k + 1, k] = np.sqrt(l * (l + 1) - m[k] * (m[k] + 1))
    jm = jp.T
    jx = (jp + jm) / 2
    jy = (jp - jm) / 2j
    jz = np.diag(m).astype(complex)
    u = complex_to_real(l)
    gens = []
    for j in (jx, jy, jz):
        g = u @ (1j * np.conj(j)) @ u.conj().T
        assert np.allclose(g.imag, 0, atol=1e-12)
        gens.append(np.ascontiguousarray(g.real))
    return tuple(gens)


@lru_cache(maxsize=None)
def _eig(l: int, axis: int):
    g = real_generators(l)[axis]
    # g is real antisymmetric: -i g is Hermitian
    lam, w = np.linalg.eigh(-1j * g)
    w.setflags(write=False)
    lam.setflags(write=False)
    return lam, w


def _axis_exp(l: int, axis: int, t: np.ndarray) -> np.ndarray:
    """exp(t G_axis) for a batch of angles t, shape t.shape + (d, d)."""
    lam, w = _eig(l, axis)
    phase = np.exp(1j * np.multiply.outer(t, lam))
    out = np.einsum("ij,...j,kj->...ik", w, phase, w.conj())
    return out.real


def euler_zyz(rmat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angles (a, b, c) with R = Rz(a) Ry(b) Rz(c); batched over leading axes.

    Near the poles (b within 1e-9 of 0 or pi) c is set to 0 and a absorbs
    the remaining z rotation.
    """
    r = np.asarray(rmat, dtype=float)
    sb = np.hypot(r[..., 0, 2], r[..., 1, 2])
    b = np.arctan2(sb, np.clip(r[..., 2, 2], -1.0, 1.0))
    a = np.arctan2(r[..., 1, 2], r[..., 0, 2])
    c = np.arctan2(r[..., 2, 1], -r[..., 2, 0])
    north = b < _GIMBAL_TOL
    south = b > np.pi - _GIMBAL_TOL
    a = np.where(north, np.arctan2(r[..., 1, 0], r[..., 0, 0]), a)
    a = np.where(south, np.arctan2(-r[..., 1, 0], -r[..., 0, 0]), a)
    c = np.where(north | south, 0.0, c)
    return a, b, c


def _as_quats(r) -> np.ndarray:
    if isinstance(r, Rotation):
        return r.q
    return np.asarray(r, dtype=float)


def wigner_d_real(l: int, r) -> np.ndarray:
    """Real Wigner-D matrix of frequency l.

    ``r`` is a Rotation (returns (2l+1, 2l+1)) or an array of quaternions of
    shape (..., 4) (returns (..., 2l+1, 2l+1)).
    """
    l = _check_l(l)
    q = _as_quats(r)
    if l == 0:
        return np.ones(q.shape[:-1] + (1, 1))
    a, b, c = euler_zyz(quat_to_matrix(q))
    za = _axis_exp(l, 2, a)
    yb = _axis_exp(l, 1, b)
    zc = _axis_exp(l, 2, c)
    return za @ yb @ zc


def real_sph_harm(l: int, p) -> np.ndarray:
    """Y^l(p): the m=0 column of D^l(g_p) for any g_p taking north to p.

    Normalised so that Y^l(north) = e_{m=0}; its mean square over the sphere
    is 1/(2l+1) per component. ``p`` has shape (..., 3); output (..., 2l+1).
    """
    l = _check_l(l)
    p = np.asarray(p, dtype=float)
    if l == 0:
        return np.ones(p.shape[:-1] + (1,))
    p = p / np.linalg.norm(p, axis=-1, keepdims=True)
    theta = np.arctan2(np.hypot(p[..., 0], p[..., 1]), p[..., 2])
    phi = np.arctan2(p[..., 1], p[..., 0])
    col = _axis_exp(l, 1, theta)[..., :, l]
    return np.einsum("...ij,...j->...i", _axis_exp(l, 2, phi), col)


def axis_permutation() -> np.ndarray:
    """P mapping (x, y, z) to the l=1 slots (m=1, m=-1, m=0)."""
    return np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
