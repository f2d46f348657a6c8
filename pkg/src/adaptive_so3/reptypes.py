"""Band-limited regular and quotient (S^2) representation descriptors.

A coefficient vector of a :class:`FieldType` is laid out l-ascending; frequency
l contributes ``q_l`` contiguous copies of a (2l+1)-subvector (m = -l..l).
Quotient types keep one copy per frequency, regular types keep 2l+1 copies,
which are the columns of the matrix coefficient f(psi) (column-major vec).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import cached_property

import numpy as np

from .harmonics import L_MAX, wigner_d_real
from .rotations import Rotation


class Kind(str, Enum):
    REGULAR = "regular"
    QUOTIENT = "quotient"


@dataclass(frozen=True)
class FieldType:
    kind: Kind
    L: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if not isinstance(self.L, (int, np.integer)) or not 0 <= self.L <= L_MAX:
            raise ValueError(f"band limit L={self.L!r} outside 0..{L_MAX}")
        object.__setattr__(self, "L", int(self.L))

    def multiplicity(self, l: int) -> int:
        """q_l: number of copies of frequency l."""
        return 1 if self.kind == Kind.QUOTIENT else 2 * l + 1

    @property
    def ls(self) -> range:
        return range(self.L + 1)

    @cached_property
    def F(self) -> int:
        return sum((2 * l + 1) * self.multiplicity(l) for l in self.ls)

    @cached_property
    def blocks(self) -> list[tuple[int, int, slice]]:
        """(l, copy, slice) for every (2l+1)-subvector, in layout order."""
        out = []
        start = 0
        for l in self.ls:
            d = 2 * l + 1
            for j in range(self.multiplicity(l)):
                out.append((l, j, slice(start, start + d)))
                start += d
        return out

    def freq_slice(self, l: int) -> slice:
        """All copies of frequency l as one contiguous slice."""
        start = sum((2 * k + 1) * self.multiplicity(k) for k in range(l))
        return slice(start, start + (2 * l + 1) * self.multiplicity(l))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "L": self.L}

    @classmethod
    def from_dict(cls, d: dict) -> "FieldType":
        return cls(Kind(d["kind"]), int(d["L"]))


def field_type(kind: Kind | str, L: int) -> FieldType:
    return FieldType(Kind(kind), L)


@dataclass(frozen=True, eq=False)
class FourierFeature:
    """Fourier coefficients of a band-limited function; coeffs has shape (..., F)."""

    type: FieldType
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape[-1:] != (self.type.F,):
            raise ValueError(f"coefficient length {c.shape[-1:]} does not match F={self.type.F}")
        object.__setattr__(self, "coeffs", c)


def delta_hat(t: FieldType, normalized: bool = False) -> np.ndarray:
    """Fourier coefficients of the indicator of the origin coset.

    Quotient: sqrt(2l+1) e_{m=0} per frequency. Regular: sqrt(2l+1) vec(I).
    With ``normalized`` the whole vector is scaled to unit norm.
    """
    out = np.zeros(t.F)
    for l, j, sl in t.blocks:
        col = np.zeros(2 * l + 1)
        col[l if t.kind == Kind.QUOTIENT else j] = np.sqrt(2 * l + 1)
        out[sl] = col
    if normalized:
        out /= np.linalg.norm(out)
    return out


def rho_matrix(t: FieldType, r) -> np.ndarray:
    """Block-diagonal rho(g) of shape (..., F, F); r is a Rotation or quaternions."""
    q = r.q if isinstance(r, Rotation) else np.asarray(r, dtype=float)
    out = np.zeros(q.shape[:-1] + (t.F, t.F))
    for l in t.ls:
        d = wigner_d_real(l, q)
        for ll, _, sl in t.blocks:
            if ll == l:
                out[..., sl, sl] = d
    return out


def rho_apply(t: FieldType, r, fhat):
    """Apply rho(r) to coefficient rows.

    ``fhat`` may be a FourierFeature (returned as one) or an array (..., F),
    in which case every row is rotated.
    """
    wrap = isinstance(fhat, FourierFeature)
    if wrap:
        if fhat.type != t:
            raise ValueError(f"feature type {fhat.type} does not match {t}")
        coeffs = fhat.coeffs
    else:
        coeffs = np.asarray(fhat, dtype=float)
        if coeffs.shape[-1] != t.F:
            raise ValueError(f"coefficient length {coeffs.shape[-1]} does not match F={t.F}")
    q = r.q if isinstance(r, Rotation) else np.asarray(r, dtype=float)
    out = np.empty_like(coeffs)
    for l in t.ls:
        d = wigner_d_real(l, q)
        sl = t.freq_slice(l)
        # copies along a new axis so one matmul rotates them all
        block = coeffs[..., sl].reshape(coeffs.shape[:-1] + (t.multiplicity(l), 2 * l + 1))
        out[..., sl] = (block @ np.swapaxes(d, -1, -2)).reshape(coeffs.shape[:-1] + (-1,))
    return FourierFeature(t, out) if wrap else out
