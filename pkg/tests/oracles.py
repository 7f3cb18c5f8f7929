"""Reference values computed without the package's own numerics."""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy import integrate


def sommerfeld(nu: float, n_r: int, dirac_kappa: float) -> float:
    """Fine-structure energy ``(1 + nu^2 / (n_r + sqrt(kappa^2 - nu^2))^2)^(-1/2)``."""
    return (1.0 + nu**2 / (n_r + math.sqrt(dirac_kappa**2 - nu**2)) ** 2) ** -0.5


def sommerfeld_levels(nu: float, kappa_max: int, count: int) -> list[float]:
    """Lowest ``count`` distinct 3D hydrogenic levels with ``|kappa| <= kappa_max``.

    Positive Dirac ``kappa`` has no nodeless state, so ``n_r >= 1`` there.
    """
    values = set()
    for mag in range(1, kappa_max + 1):
        for kappa in (-mag, mag):
            for n_r in range(0 if kappa < 0 else 1, count + 2):
                values.add(round(sommerfeld(nu, n_r, kappa), 12))
    return sorted(values)[:count]


def legendre_q_quad(j: float, z: float) -> float:
    """``2^{-j-1} int_{-1}^{1} (1-t^2)^j (z-t)^{-j-1} dt`` by algebraic-weight quadrature."""
    val, _ = integrate.quad(lambda t: (z - t) ** (-j - 1.0), -1.0, 1.0, weight="alg", wvar=(j, j),
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return 2.0 ** (-j - 1.0) * val


def legendre_q_mp(j: float, z: float, dps: int = 30) -> float:
    """Same integral in extended precision, split at the endpoints' singular weights."""
    with mpmath.workdps(dps):
        jj, zz = mpmath.mpf(j), mpmath.mpf(z)
        f = lambda t: (1 - t * t) ** jj * (zz - t) ** (-jj - 1)
        return float(2 ** (-jj - 1) * mpmath.quad(f, [-1, 0, 1]))


def kato_constant_mp(dim: int) -> float:
    with mpmath.workdps(40):
        return float(2 * (4 - dim) * mpmath.gamma(mpmath.mpf(dim + 1) / 4) ** 2
                     / mpmath.gamma(mpmath.mpf(dim - 1) / 4) ** 2)


def cell_double_integral(j: float, a: float, b: float, c: float, d: float) -> float:
    """``pi^{-1} int_a^b int_c^d Q_j((p/q + q/p)/2) dq dp`` for separated cells."""
    def inner(p):
        val, _ = integrate.quad(lambda q: legendre_q_quad(j, 0.5 * (p / q + q / p)), c, d, epsrel=1e-11)
        return val

    val, _ = integrate.quad(inner, a, b, epsrel=1e-11)
    return val / math.pi


def smooth_cutoff(t):
    """``xi(t) = h(2-t) / (h(2-t) + h(t-1))`` with ``h(s) = exp(-1/s)`` for ``s > 0``."""
    t = np.asarray(t, dtype=float)

    def h(s):
        out = np.zeros_like(s)
        pos = s > 0
        out[pos] = np.exp(-1.0 / s[pos])
        return out

    a, b = h(2.0 - t), h(t - 1.0)
    return a / (a + b)
