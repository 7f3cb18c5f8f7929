"""Momentum-space Coulomb forms of a single angular-momentum channel.

The Coulomb interaction restricted to one channel is the integral operator

    q_j[f, g] = (1/pi) int int f(p) Q_j((q/p + p/q)/2) g(q) dq dp

with ``Q_j`` the Legendre function of the second kind.  Everything here is
discretised with functions that are piecewise constant on geometric cells
``[p_i, p_{i+1}]``.  In the log variable ``p = e^s`` the kernel only depends
on ``s - t`` (``(q/p + p/q)/2 = cosh(s - t)``), so the Galerkin matrix of
``q_j`` is ``diag(p_i) T diag(p_i)`` with ``T`` Toeplitz.  Each Toeplitz
entry is a one-dimensional integral; the log singularity of ``Q_j`` at the
diagonal is integrated adaptively.

Because the matrices are exact Galerkin restrictions, every inequality
between the continuous forms (ordering in ``j``, the Kato-type bounds
against ``p[f] = int p |f|^2 dp``) holds for the matrices up to the
quadrature error of the Toeplitz entries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import digamma, gammaln

from .errors import DomainError, QuadratureFailure

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)

# Toeplitz entries below this relative size are dropped.
_TAIL_CUTOFF = 1e-30


def kato_constant(dim: int) -> float:
    """Sharp constant ``c_n = 2 (4 - n) Gamma((n+1)/4)^2 / Gamma((n-1)/4)^2``."""
    if dim not in (2, 3):
        raise DomainError(f"dimension must be 2 or 3, got {dim!r}")
    return 2.0 * (4 - dim) * math.exp(2.0 * (math.lgamma((dim + 1) / 4) - math.lgamma((dim - 1) / 4)))


def _check_order(j: float) -> None:
    if j < -0.5 or abs(2 * j - round(2 * j)) > 1e-12:
        raise DomainError(f"order must be in {{-1/2, 0, 1/2, 1, ...}}, got {j!r}")


def _q_series(j: float, u: np.ndarray) -> np.ndarray:
    """``Q_j(cosh u)`` from the hypergeometric representation in ``e^{-2u}``.

    Q_j(cosh u) = sqrt(pi) G(j+1)/G(j+3/2) e^{-(j+1)u} F(1/2, j+1; j+3/2; e^{-2u}).
    Near ``u = 0`` the ``c = a + b`` logarithmic continuation in ``1 - e^{-2u}`` is
    summed instead, which keeps full relative accuracy at the singularity.
    """
    b = j + 1.0
    x = np.exp(-2.0 * u)
    out = np.empty_like(u)

    near = x >= 0.5
    if np.any(near):
        un = u[near]
        y = -np.expm1(-2.0 * un)
        logy = np.log(y)
        term = np.ones_like(un)
        total = np.zeros_like(un)
        for k in range(400):
            bracket = 2.0 * digamma(k + 1.0) - digamma(0.5 + k) - digamma(b + k) - logy
            piece = term * bracket
            total += piece
            if k > 4 and np.all(np.abs(piece) <= 1e-17 * np.abs(total)):
                break
            term = term * (0.5 + k) * (b + k) / ((k + 1.0) ** 2) * y
        out[near] = np.exp(-b * un) * total

    far = ~near
    if np.any(far):
        xf = x[far]
        pref = math.exp(0.5 * math.log(math.pi) + gammaln(b) - gammaln(b + 0.5))
        term = np.ones_like(xf)
        total = np.zeros_like(xf)
        c = b + 0.5
        for k in range(400):
            total += term
            if k > 2 and np.all(np.abs(term) <= 1e-17 * total):
                break
            term = term * (0.5 + k) * (b + k) / ((c + k) * (k + 1.0)) * xf
        out[far] = pref * np.exp(-b * u[far]) * total
    return out


def legendre_q_cosh(j: float, u) -> np.ndarray:
    """``Q_j(cosh u)`` for ``u > 0``; accurate down to ``u -> 0``."""
    _check_order(j)
    u = np.asarray(u, dtype=float)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if np.any(u <= 0):
        raise DomainError("Q_j(cosh u) needs u > 0 (z = cosh u > 1)")
    if j == 0:
        out = -np.log(np.tanh(0.5 * u))
    else:
        out = _q_series(j, u)
        if j == 1:
            z = np.cosh(u)
            small = z <= 4.0
            q0 = -np.log(np.tanh(0.5 * u[small]))
            out[small] = z[small] * q0 - 1.0
    return out[0] if scalar else out


def legendre_q(j: float, z):
    """Legendre function of the second kind ``Q_j(z)`` for ``z > 1``.

    Defined by ``Q_j(z) = 2^{-j-1} int_{-1}^{1} (1-t^2)^j (z-t)^{-j-1} dt``.
    ``Q_0`` and ``Q_1`` use their logarithmic closed forms.
    """
    _check_order(j)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 1.0):
        raise DomainError("Q_j(z) is singular at z = 1 and undefined below")
    scalar = z.ndim == 0
    z = np.atleast_1d(z)
    if j == 0:
        out = 0.5 * np.log((z + 1.0) / (z - 1.0))
    elif j == 1:
        out = np.where(z <= 4.0, 0.5 * z * np.log((z + 1.0) / (z - 1.0)) - 1.0, 0.0)
        big = z > 4.0
        if np.any(big):
            out[big] = _q_series(1.0, np.arccosh(z[big]))
    else:
        u = np.log(z + np.sqrt((z - 1.0) * (z + 1.0)))
        out = _q_series(j, u)
    return float(out[0]) if scalar else out


def coulomb_kernel(j: float, p: float, q: float) -> float:
    """Pointwise kernel ``pi^{-1} Q_j((q/p + p/q)/2)`` of the form ``q_j``."""
    if p <= 0 or q <= 0:
        raise DomainError("momenta must be positive")
    if p == q:
        raise DomainError("kernel is singular on the diagonal p = q")
    lo, hi = (p, q) if p < q else (q, p)
    return float(legendre_q_cosh(j, math.log(hi / lo))) / math.pi


@dataclass(frozen=True)
class MomentumMesh:
    """Cells ``[edges[i], edges[i+1]]`` on ``(p_min, p_max)``.

    ``nodes`` are the arithmetic cell midpoints and ``weights`` the cell
    lengths, so the midpoint rule integrates linear functions exactly.
    """

    edges: np.ndarray
    nodes: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise DomainError("need at least two cell edges")
        if edges[0] <= 0 or np.any(np.diff(edges) <= 0):
            raise DomainError("cell edges must be positive and strictly increasing")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "nodes", 0.5 * (edges[1:] + edges[:-1]))
        object.__setattr__(self, "weights", np.diff(edges))

    @classmethod
    def geometric(cls, p_min: float = 1e-4, p_max: float = 1e4, size: int = 200) -> "MomentumMesh":
        if not 0 < p_min < p_max:
            raise DomainError("need 0 < p_min < p_max")
        return cls(np.geomspace(p_min, p_max, size + 1))

    @classmethod
    def for_coupling(cls, dim: int, nu: float, size: int = 600, p_max: float = 1e8) -> "MomentumMesh":
        """Geometric mesh reaching three decades below the bound-state momentum scale.

        The upper cut is far out because near-critical profiles decay only
        like ``p^(-1-gamma)`` with small ``gamma``.
        """
        rate = (4 - dim) * nu
        p_min = 1e-3 * min(1.0, rate) if rate > 0 else 1e-4
        return cls.geometric(p_min, p_max, size)

    @property
    def p_min(self) -> float:
        return float(self.edges[0])

    @property
    def p_max(self) -> float:
        return float(self.edges[-1])

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def log_edges(self) -> np.ndarray:
        return np.log(self.edges)

    @property
    def is_geometric(self) -> bool:
        steps = np.diff(self.log_edges)
        return bool(np.allclose(steps, steps[0], rtol=1e-10, atol=0))


@dataclass(frozen=True)
class FormMatrix:
    """Galerkin matrix of a quadratic form on a :class:`MomentumMesh`.

    ``order`` is the Coulomb order ``j`` or ``None`` for the kinetic form.
    """

    order: float | None
    entries: np.ndarray
    mesh: MomentumMesh

    def __call__(self, f: np.ndarray) -> float:
        f = np.asarray(f)
        return float(np.real(np.conj(f) @ self.entries @ f))


def assemble_p_form(mesh: MomentumMesh) -> FormMatrix:
    """Kinetic comparison form ``p[f] = int p |f|^2 dp``; exact on cellwise constants."""
    return FormMatrix(None, np.diag(mesh.weights * mesh.nodes), mesh)


def _overlap_integral(j: float, m: int, h: float, tol: float) -> float:
    """``int_{-h}^{h} Q_j(cosh(m h + v)) (e^{2h-|v|} - e^{|v|})/2 dv``.

    This is the double integral over two log cells ``m`` steps apart, weighted
    by ``e^{s+t}`` and reduced to the difference variable.
    """
    def weight(v):
        av = np.abs(v)
        return 0.5 * (np.exp(2.0 * h - av) - np.exp(av))

    def integrand(v):
        return float(legendre_q_cosh(j, abs(m * h + v))) * float(weight(v))

    if m >= 2:
        # Singularity at v = -m h lies at least one half-width outside each half.
        total = 0.0
        for a, b in ((-h, 0.0), (0.0, h)):
            v = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
            total += 0.5 * (b - a) * np.sum(_GL_WEIGHTS * legendre_q_cosh(j, m * h + v) * weight(v))
        return float(total)

    total = 0.0
    for a, b in ((-h, 0.0), (0.0, h)):
        val, err = integrate.quad(integrand, a, b, epsabs=0.0, epsrel=tol, limit=200)
        if not np.isfinite(val) or err > 1e3 * tol * abs(val):
            raise QuadratureFailure(f"diagonal Coulomb integral did not converge (j={j}, m={m}, err={err:.2e})")
        total += val
    return total


@lru_cache(maxsize=64)
def _toeplitz_column(j: float, h: float, size: int, tol: float) -> np.ndarray:
    col = np.zeros(size)
    for m in range(size):
        col[m] = _overlap_integral(j, m, h, tol)
        if m > 2 and col[m] < _TAIL_CUTOFF * col[0]:
            break
    return col


def _general_entry(j: float, a: float, b: float, c: float, d: float, tol: float) -> float:
    """``int_a^b int_c^d Q_j(cosh(s - t)) e^{s+t} dt ds`` for arbitrary log cells."""
    def integrand(v):
        lo, hi = max(a, c + v), min(b, d + v)
        if hi <= lo or v == 0.0:
            return 0.0
        return float(legendre_q_cosh(j, abs(v))) * math.exp(-v) * 0.5 * (math.exp(2 * hi) - math.exp(2 * lo))

    lo, hi = a - d, b - c
    pts = sorted({x for x in (0.0, a - c, b - d) if lo < x < hi})
    val, err = integrate.quad(integrand, lo, hi, points=pts or None, epsabs=0.0, epsrel=tol, limit=400)
    if err > 1e3 * tol * abs(val):
        raise QuadratureFailure(f"Coulomb cell integral did not converge (err={err:.2e})")
    return val


def assemble_coulomb_form(j: float, mesh: MomentumMesh, tol: float = 1e-13) -> FormMatrix:
    """Galerkin matrix of ``q_j`` on cellwise-constant functions of ``mesh``."""
    _check_order(j)
    s = mesh.log_edges
    if mesh.is_geometric:
        h = float(s[1] - s[0])
        col = _toeplitz_column(float(j), h, mesh.size, tol)
        idx = np.abs(np.subtract.outer(np.arange(mesh.size), np.arange(mesh.size)))
        scale = mesh.edges[:-1]
        entries = np.outer(scale, scale) * col[idx] / math.pi
    else:
        n = mesh.size
        entries = np.empty((n, n))
        for i in range(n):
            for k in range(i, n):
                entries[i, k] = entries[k, i] = _general_entry(j, s[i], s[i + 1], s[k], s[k + 1], tol) / math.pi
    return FormMatrix(float(j), entries, mesh)


# (order, bound factor) of the Kato-type bounds q_j <= factor * p, per dimension
KATO_BOUNDS = {
    3: ((0.0, lambda c: 1.0 / c), (1.0, lambda c: c)),
    2: ((-0.5, lambda c: 2.0 / c), (0.5, lambda c: 2.0 * c)),
}


def kato_bounds() -> list[tuple[int, float, float]]:
    """``(dim, j, C)`` for the four bounds ``q_j[f] <= C p[f]``."""
    out = []
    for dim, pairs in KATO_BOUNDS.items():
        c = kato_constant(dim)
        out.extend((dim, j, fac(c)) for j, fac in pairs)
    return out


def concentrating_trial(mesh: MomentumMesh, width: float) -> np.ndarray:
    """Cell values of ``p^(-1) exp(-(log p - m)^2 / (2 width^2))`` centred on the mesh.

    As ``width`` grows the Rayleigh quotient ``q_j / p`` tends to the sharp
    constant, because ``p^(-1)`` is the scale-invariant extremal profile.
    """
    s = np.log(mesh.nodes)
    mid = 0.5 * (s[0] + s[-1])
    return np.exp(-((s - mid) ** 2) / (2.0 * width**2)) / mesh.nodes


def rayleigh_ratio(q: FormMatrix, p: FormMatrix, f: np.ndarray) -> float:
    return q(f) / p(f)
