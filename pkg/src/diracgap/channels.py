"""Angular-momentum channels of the two- and three-dimensional Dirac operator.

A channel index is an ``int`` ``k`` in two dimensions and a pair ``(l, s)``
with ``s = +-0.5`` in three dimensions.  The magnetic label ``m`` never
changes a radial problem, so it is folded into :attr:`Channel.degeneracy`.

Sign convention for ``kappa`` is ``k + 1/2`` (2D) and ``2 s l + s + 1/2``
(3D).  With it the radial kinetic factor of the upper component is
``f' - kappa f / r``; the hydrogenic ground state sits in ``kappa = +1``
(3D, ``l = 0``) and ``kappa = +1/2`` (2D, ``k = 0``).  This is the negative
of the usual Dirac ``kappa``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import InvalidChannel

Index = Union[int, tuple[int, float]]

PLUS = "plus"
MINUS = "minus"


def _check_dim(dim: int) -> None:
    if dim not in (2, 3):
        raise InvalidChannel(f"dimension must be 2 or 3, got {dim!r}")


def _check_index(dim: int, index: Index) -> None:
    _check_dim(dim)
    if dim == 2:
        if isinstance(index, bool) or not isinstance(index, int):
            raise InvalidChannel(f"2D channel index must be an int, got {index!r}")
        return
    try:
        l, s = index
    except (TypeError, ValueError):
        raise InvalidChannel(f"3D channel index must be (l, s), got {index!r}") from None
    if int(l) != l or l < 0:
        raise InvalidChannel(f"l must be a non-negative integer, got {l!r}")
    if s not in (0.5, -0.5):
        raise InvalidChannel(f"s must be +-1/2, got {s!r}")
    if l == 0 and s == -0.5:
        raise InvalidChannel("(l=0, s=-1/2) is not a channel")


def kappa_of(dim: int, index: Index) -> float:
    """Relativistic quantum number of a channel (never zero)."""
    _check_index(dim, index)
    if dim == 2:
        return index + 0.5
    l, s = index
    return 2 * s * l + s + 0.5


def apply_T(dim: int, index: Index) -> Index:
    """Shift map pairing an upper-component channel with its lower partner."""
    _check_index(dim, index)
    if dim == 2:
        return index + 1
    l, s = index
    return (int(l + 2 * s), -s)


def apply_T_inverse(dim: int, index: Index) -> Index:
    _check_index(dim, index)
    if dim == 2:
        return index - 1
    # in 3D the shift is an involution
    return apply_T(3, index)


def parity_of(dim: int, index: Index) -> str:
    _check_index(dim, index)
    if dim == 2:
        return PLUS if index % 2 == 0 else MINUS
    return PLUS if index[1] > 0 else MINUS


def coupling_c(dim: int, index: Index) -> float:
    """Per-channel coupling constant used by the lower-spinor trial maps."""
    from .kernel import kato_constant

    c = kato_constant(dim)
    if dim == 2:
        return c if parity_of(2, index) == PLUS else 1.0 / c
    _check_index(3, index)
    return c if index[1] > 0 else 1.0 / c


def coulomb_order(dim: int, index: Index) -> float:
    """Order ``j`` of the momentum-space Coulomb form ``q_j`` acting on a channel."""
    _check_index(dim, index)
    if dim == 2:
        return abs(index) - 0.5
    return float(index[0])


def index_from_kappa(dim: int, kappa: float) -> Index:
    _check_dim(dim)
    if dim == 2:
        k = kappa - 0.5
        if k != int(k):
            raise InvalidChannel(f"2D kappa must be a half-integer, got {kappa!r}")
        return int(k)
    if kappa == 0 or kappa != int(kappa):
        raise InvalidChannel(f"3D kappa must be a nonzero integer, got {kappa!r}")
    kappa = int(kappa)
    return (kappa - 1, 0.5) if kappa > 0 else (-kappa, -0.5)


@dataclass(frozen=True)
class Channel:
    dim: int
    index: Index
    kappa: float
    parity: str
    degeneracy: int

    @classmethod
    def from_index(cls, dim: int, index: Index) -> "Channel":
        kappa = kappa_of(dim, index)
        if dim == 3:
            index = (int(index[0]), float(index[1]))
        degeneracy = 1 if dim == 2 else int(round(2 * abs(kappa)))
        return cls(dim, index, kappa, parity_of(dim, index), degeneracy)

    @classmethod
    def from_kappa(cls, dim: int, kappa: float) -> "Channel":
        return cls.from_index(dim, index_from_kappa(dim, kappa))

    @classmethod
    def from_dirac_kappa(cls, dim: int, kappa: float) -> "Channel":
        """Channel from the usual Dirac quantum number (opposite sign to :attr:`kappa`)."""
        return cls.from_kappa(dim, -kappa)

    @property
    def dirac_kappa(self) -> float:
        """Usual Dirac ``kappa``; the ground state sits at ``-1`` (3D) or ``-1/2`` (2D)."""
        return -self.kappa

    @property
    def partner(self) -> "Channel":
        """Channel carrying the lower spinor component (``T_n`` applied)."""
        return Channel.from_index(self.dim, apply_T(self.dim, self.index))

    @property
    def coupling(self) -> float:
        return coupling_c(self.dim, self.index)

    @property
    def order(self) -> float:
        return coulomb_order(self.dim, self.index)

    def label(self) -> str:
        if self.dim == 2:
            return f"k={self.index}"
        l, s = self.index
        return f"l={l},s={'+' if s > 0 else '-'}1/2"


def enumerate_channels(dim: int, kappa_max: float) -> list[Channel]:
    """All channels with ``|kappa| <= kappa_max``, ordered by ``|kappa|`` then sign."""
    _check_dim(dim)
    floor = 0.5 if dim == 2 else 1.0
    if kappa_max < floor:
        raise InvalidChannel(f"kappa_max must be >= {floor} in {dim}D, got {kappa_max!r}")
    out = []
    if dim == 2:
        top = math.floor(kappa_max - 0.5 + 1e-12)
        mags = [a + 0.5 for a in range(top + 1)]
    else:
        mags = list(range(1, math.floor(kappa_max + 1e-12) + 1))
    for mag in mags:
        for kappa in (-mag, mag):
            out.append(Channel.from_kappa(dim, kappa))
    return out
