"""Radial (configuration-space) machinery for one angular-momentum channel.

The channel operator acting on ``(f, g)`` is

    [[1 + v,           -d/dr - kappa/r],
     [d/dr - kappa/r,  -1 + v         ]]

and is discretised with piecewise-linear hat functions on a mesh whose
first element is ``[0, r_min]`` and whose remaining nodes are log-spaced up
to ``r_max``, with a uniform band across the cut-off transition.
Channels with ``kappa^2 - nu^2 < 1/4`` get one more basis function, the
cut-off regular zero-energy solution ``xi * phi_1``; it
carries the ``r^gamma`` behaviour that hats cannot represent and selects
the distinguished self-adjoint extension.

Integrals over the first element are done in the variable ``s = log r``
with a composite Gauss rule that reaches far enough towards ``r = 0`` for
the ``r^(2 gamma - 1)`` integrands to have decayed below roundoff.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, sparse

from .channels import Channel
from .errors import DomainError, InvalidPotential, OutOfCoreBranch, QuadratureFailure

_GAUSS_POINTS = 5
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
# panels in log r on the first element see exp(c s) integrands
_LOG_X, _LOG_W = np.polynomial.legendre.leggauss(20)
_R_FLOOR = 1e-150


def critical_coupling(dim: int) -> float:
    return 1.0 / (4 - dim)


def ground_state_energy(dim: int, nu: float) -> float:
    """Lowest gap eigenvalue of the Coulomb-Dirac operator, ``sqrt(1 - ((4-n) nu)^2)``."""
    return math.sqrt(max(0.0, 1.0 - ((4 - dim) * nu) ** 2))


def coulomb_level(nu: float, kappa: float, level: int) -> float:
    """``level``-th Coulomb gap eigenvalue (1-based) in the channel with this ``kappa``.

    Channels with ``kappa > 0`` start at radial quantum number 0, those with
    ``kappa < 0`` at 1.
    """
    if level < 1:
        raise DomainError("level must be >= 1")
    n_r = level - 1 if kappa > 0 else level
    root = math.sqrt(kappa * kappa - nu * nu)
    return 1.0 / math.sqrt(1.0 + (nu / (n_r + root)) ** 2)


# ---------------------------------------------------------------------------
# cut-off functions


def _h(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _dh(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def smooth_step(x):
    """C-infinity step: 0 for ``x <= 0``, 1 for ``x >= 1``."""
    x = np.asarray(x, dtype=float)
    a, b = _h(x), _h(1.0 - x)
    return a / (a + b)


def smooth_step_derivative(x):
    x = np.asarray(x, dtype=float)
    a, b = _h(x), _h(1.0 - x)
    da, db = _dh(x), -_dh(1.0 - x)
    return (da * b - a * db) / (a + b) ** 2


@dataclass(frozen=True)
class CutoffPair:
    """``xi`` (1 on (0,1], 0 beyond 2) and ``upsilon`` (``xi`` times a rise on (1/4, 1/2))."""

    def xi(self, t):
        return smooth_step(2.0 - np.asarray(t, dtype=float))

    def dxi(self, t):
        return -smooth_step_derivative(2.0 - np.asarray(t, dtype=float))

    def upsilon(self, t):
        t = np.asarray(t, dtype=float)
        return self.xi(t) * smooth_step(4.0 * t - 1.0)

    def dupsilon(self, t):
        t = np.asarray(t, dtype=float)
        g = smooth_step(4.0 * t - 1.0)
        return self.dxi(t) * g + self.xi(t) * 4.0 * smooth_step_derivative(4.0 * t - 1.0)

    def upsilon_k(self, k: int, t):
        """Three-piece mollifier: ``upsilon(k t)``, then 1, then ``xi``."""
        t = np.asarray(t, dtype=float)
        return np.where(t <= 1.0 / k, self.upsilon(k * t), np.where(t <= 1.0, 1.0, self.xi(t)))

    def dupsilon_k(self, k: int, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= 1.0 / k, k * self.dupsilon(k * t), np.where(t <= 1.0, 0.0, self.dxi(t)))


DEFAULT_CUTOFFS = CutoffPair()


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialSpec:
    """Radial scalar potential with ``0 >= v(r) >= -nu_bound / r``.

    Use :meth:`coulomb` or :meth:`tabulated`.  Internally the bounded product
    ``r v(r)`` is evaluated so that ``r -> 0`` never overflows.
    """

    kind: str
    nu_bound: float
    r_table: np.ndarray | None = None
    v_table: np.ndarray | None = None

    @classmethod
    def coulomb(cls, nu: float) -> "PotentialSpec":
        if nu < 0:
            raise InvalidPotential(f"coupling must be non-negative, got {nu!r}")
        return cls("coulomb", float(nu))

    @classmethod
    def tabulated(cls, r, v, nu_bound: float) -> "PotentialSpec":
        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 2:
            raise InvalidPotential("tabulated potential needs matching 1D arrays of length >= 2")
        if r[0] <= 0 or np.any(np.diff(r) <= 0):
            raise InvalidPotential("table radii must be positive and strictly increasing")
        spec = cls("tabulated", float(nu_bound), r, v)
        mid = 0.5 * (r[1:] + r[:-1])
        probe = np.concatenate([r, mid])
        rv = spec.rv(probe)
        slack = 1e-12 * max(1.0, nu_bound)
        if np.any(rv > slack) or np.any(rv < -nu_bound - slack):
            bad = probe[np.argmax(np.maximum(rv, -nu_bound - rv))]
            raise InvalidPotential(f"potential violates 0 >= v >= -nu/r near r={bad:.6g}")
        return spec

    @property
    def nu(self) -> float:
        return self.nu_bound

    def rv(self, r):
        """``r * v(r)``, bounded by ``[-nu_bound, 0]``."""
        r = np.asarray(r, dtype=float)
        if self.kind == "coulomb":
            return np.full_like(r, -self.nu_bound)
        rt, vt = self.r_table, self.v_table
        inner = np.interp(r, rt, vt) * r
        # Coulomb tails with the end-point effective charges outside the table
        inner = np.where(r < rt[0], rt[0] * vt[0], inner)
        return np.where(r > rt[-1], rt[-1] * vt[-1], inner)

    def v(self, r):
        r = np.asarray(r, dtype=float)
        return self.rv(r) / r

    def check(self, dim: int, allow_critical: bool = False) -> None:
        crit = critical_coupling(dim)
        if self.nu_bound < 0 or self.nu_bound > crit or (self.nu_bound == crit and not allow_critical):
            rng = f"[0, {crit}]" if allow_critical else f"[0, {crit})"
            raise InvalidPotential(f"nu = {self.nu_bound} outside {rng} for dim={dim}")


# ---------------------------------------------------------------------------
# zero-energy solutions


def _kappa(channel_or_kappa) -> float:
    return channel_or_kappa.kappa if isinstance(channel_or_kappa, Channel) else float(channel_or_kappa)


def needs_extension(channel, nu: float) -> bool:
    """True iff ``kappa^2 - nu^2 < 1/4`` (the extra core function is required)."""
    k = _kappa(channel)
    return k * k - nu * nu < 0.25


def extension_solution(channel, nu: float, which: int, r):
    """Zero-energy solutions ``phi_1`` (regular) and ``phi_2`` of the channel operator.

    Returns an array of shape ``(2,) + shape(r)``.
    """
    k = _kappa(channel)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("r must be positive")
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    if nu == 0:
        if which == 1:
            return np.array([r**k, np.zeros_like(r)])
        return np.array([np.zeros_like(r), r ** (-k)])
    if nu * nu > k * k:
        raise DomainError("nu^2 > kappa^2 is outside the admissible range")
    g = math.sqrt(k * k - nu * nu)
    if which == 1:
        return np.array([nu * r**g, (g - k) * r**g])
    if g > 0:
        return np.array([nu * r ** (-g), (-g - k) * r ** (-g)])
    lr = np.log(r)
    return np.array([nu * lr, 1.0 - k * lr])


# ---------------------------------------------------------------------------
# mesh and basis


@dataclass(frozen=True)
class RadialMesh:
    """Hat-function mesh on ``[0, r_max]`` with ``size`` interior nodes.

    The first element is ``[0, r_min]``.  Elements are log-spaced from
    ``r_min`` to ``r_max`` except inside ``band``, the transition interval of
    the cut-off ``xi``, which gets ``band_fraction`` of all elements at
    uniform spacing.  The cut-off has large second derivatives there and
    would otherwise dominate the interpolation error of enriched channels.
    Hats vanish at ``0`` and at ``r_max``.
    """

    size: int = 1000
    r_min: float = 1e-6
    r_max: float = 50.0
    band: tuple = (0.9, 2.1)
    band_fraction: float = 0.5
    breakpoints: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.size < 2:
            raise DomainError("radial mesh needs at least 2 nodes")
        if not 0 < self.r_min < self.r_max:
            raise DomainError("need 0 < r_min < r_max")
        if not 0 <= self.band_fraction < 1:
            raise DomainError("band_fraction must lie in [0, 1)")
        n_el = self.size  # elements between r_min and r_max
        lo, hi = self.band
        if self.band_fraction == 0 or not self.r_min < lo < hi < self.r_max:
            pts = np.geomspace(self.r_min, self.r_max, n_el + 1)
        else:
            n_band = max(1, int(round(self.band_fraction * n_el)))
            n_rest = n_el - n_band
            l_in, l_out = math.log(lo / self.r_min), math.log(self.r_max / hi)
            n_in = max(1, int(round(n_rest * l_in / (l_in + l_out))))
            n_out = max(1, n_rest - n_in)
            n_band = n_el - n_in - n_out
            pts = np.concatenate([
                np.geomspace(self.r_min, lo, n_in + 1)[:-1],
                np.linspace(lo, hi, n_band + 1)[:-1],
                np.geomspace(hi, self.r_max, n_out + 1),
            ])
        bp = np.concatenate([[0.0], pts])
        object.__setattr__(self, "breakpoints", bp)

    @classmethod
    def for_coupling(cls, dim: int, nu: float, size: int = 1000, **kw) -> "RadialMesh":
        """Mesh whose outer radius covers about 40 decay lengths of ``exp(-(4-n) nu r)``."""
        if "r_max" not in kw:
            rate = (4 - dim) * nu
            kw["r_max"] = 50.0 if rate <= 0 else float(min(1e4, max(50.0, 40.0 / rate)))
        return cls(size=size, **kw)

    @property
    def nodes(self) -> np.ndarray:
        return self.breakpoints[1:-1]

    def refined(self) -> "RadialMesh":
        """Mesh with every element beyond ``r_min`` bisected; its hat space contains this one."""
        pts = self.breakpoints[1:]
        mid = 0.5 * (pts[1:] + pts[:-1])
        fine = np.empty(2 * pts.size - 1)
        fine[0::2], fine[1::2] = pts, mid
        out = object.__new__(RadialMesh)
        for name, value in (("size", 2 * self.size), ("r_min", self.r_min), ("r_max", self.r_max),
                            ("band", self.band), ("band_fraction", self.band_fraction),
                            ("breakpoints", np.concatenate([[0.0], fine]))):
            object.__setattr__(out, name, value)
        return out

    def quadrature(self, inner_decay: float = 0.5):
        """Points, weights and element index of the composite rule.

        ``inner_decay`` is the smallest exponent ``a`` for integrands ``r^(a-1)``
        expected on the first element; the graded rule extends far enough in
        ``log r`` for ``r^a`` to fall below ``1e-14``.
        """
        bp = self.breakpoints
        a, b = bp[1:-1], bp[2:]
        half = 0.5 * (b - a)[:, None]
        pts = (0.5 * (a + b))[:, None] + half * _GL_X
        wts = half * _GL_W
        elem = np.broadcast_to(np.arange(1, self.size + 1)[:, None], pts.shape)

        s_hi = math.log(self.r_min)
        # below 1e-150 squared r^(gamma - 1) factors would overflow
        depth = min(max(40.0, 32.0 / max(inner_decay, 1e-3)), s_hi - math.log(_R_FLOOR))
        nseg = int(math.ceil(depth / 1.5))
        edges = np.linspace(s_hi - depth, s_hi, nseg + 1)
        sh = 0.5 * np.diff(edges)[:, None]
        sp = 0.5 * (edges[1:] + edges[:-1])[:, None] + sh * _LOG_X
        r0 = np.exp(sp)
        w0 = sh * _LOG_W * r0
        return (
            np.concatenate([r0.ravel(), pts.ravel()]),
            np.concatenate([w0.ravel(), wts.ravel()]),
            np.concatenate([np.zeros(r0.size, dtype=int), elem.ravel()]),
        )


class RadialBasis:
    """Basis values and radial kinetic factors at quadrature points.

    Columns ``0..N-1`` are hats; if enriched, column ``N`` is
    ``xi(r) r^gamma``.  ``kin`` holds ``f' - kappa f / r`` for each column and
    ``dval`` the plain derivative.
    """

    def __init__(self, channel: Channel, mesh: RadialMesh, enrich_gamma: float | None = None,
                 cutoffs: CutoffPair = DEFAULT_CUTOFFS):
        self.channel = channel
        self.mesh = mesh
        self.gamma = enrich_gamma
        decay = 0.5
        if enrich_gamma is not None:
            decay = min(decay, 2.0 * enrich_gamma)
        r, w, elem = mesh.quadrature(inner_decay=decay)
        self.r, self.w = r, w
        bp = mesh.breakpoints
        n = mesh.size
        nq = r.size
        left, right = bp[elem], bp[elem + 1]
        width = right - left
        # hat i (0-based) peaks at bp[i+1]; element e spans [bp[e], bp[e+1]]
        rows = np.arange(nq)
        rise_col = elem      # hat peaking at the right end of the element
        fall_col = elem - 1  # hat peaking at the left end
        t = (r - left) / width
        val_rows, val_cols, vals, ders = [], [], [], []
        mask = rise_col < n
        val_rows.append(rows[mask]); val_cols.append(rise_col[mask])
        vals.append(t[mask]); ders.append(1.0 / width[mask])
        mask = fall_col >= 0
        val_rows.append(rows[mask]); val_cols.append(fall_col[mask])
        vals.append(1.0 - t[mask]); ders.append(-1.0 / width[mask])
        rows_all = np.concatenate(val_rows)
        cols_all = np.concatenate(val_cols)
        v_all = np.concatenate(vals)
        d_all = np.concatenate(ders)
        ncol = n + (1 if enrich_gamma is not None else 0)
        if enrich_gamma is not None:
            g = enrich_gamma
            xi, dxi = cutoffs.xi(r), cutoffs.dxi(r)
            e = xi * r**g
            de = dxi * r**g + g * xi * r ** (g - 1.0)
            rows_all = np.concatenate([rows_all, rows])
            cols_all = np.concatenate([cols_all, np.full(nq, n)])
            v_all = np.concatenate([v_all, e])
            d_all = np.concatenate([d_all, de])
        kappa = channel.kappa
        k_all = d_all - kappa * v_all / r[rows_all]
        shape = (nq, ncol)
        self.val = sparse.csr_matrix((v_all, (rows_all, cols_all)), shape=shape)
        self.dval = sparse.csr_matrix((d_all, (rows_all, cols_all)), shape=shape)
        self.kin = sparse.csr_matrix((k_all, (rows_all, cols_all)), shape=shape)
        self.size = ncol
        self.enriched = enrich_gamma is not None

    def weighted(self, a: sparse.spmatrix, b: sparse.spmatrix, weight: np.ndarray) -> sparse.csr_matrix:
        """``int a_i(r) b_j(r) weight(r) dr`` as a sparse matrix."""
        return (a.T @ sparse.diags(self.w * weight) @ b).tocsr()

    def gram(self) -> sparse.csr_matrix:
        return self.weighted(self.val, self.val, np.ones_like(self.r))

    def evaluate(self, coeffs: np.ndarray):
        """Values, derivatives and kinetic factors of ``sum coeffs_i b_i`` at quadrature points."""
        coeffs = np.asarray(coeffs)
        return self.val @ coeffs, self.dval @ coeffs, self.kin @ coeffs


def enrichment_exponent(channel: Channel, potential: PotentialSpec, enrich: bool | None) -> float | None:
    """``gamma = sqrt(kappa^2 - nu^2)`` if the channel gets the extra basis function."""
    nu = potential.nu_bound
    if enrich is None:
        enrich = nu > 0 and needs_extension(channel, nu)
    if not enrich:
        return None
    if nu <= 0:
        raise InvalidPotential("enrichment needs nu > 0")
    return math.sqrt(channel.kappa**2 - nu**2)


def assemble_channel_operator(channel: Channel, potential: PotentialSpec, mesh: RadialMesh,
                              enrich: bool | None = None, cutoffs: CutoffPair = DEFAULT_CUTOFFS):
    """Galerkin pair ``(H, G)`` of the full two-component channel operator.

    The 2-spinor basis is ``(hat_i, 0)``, ``(0, hat_i)`` and, when enriched,
    the single spinor ``xi * phi_1 / nu``.  The off-diagonal block is
    assembled from ``int (f' - kappa f/r) g dr`` so ``H`` is symmetric by
    construction.  Returns sparse CSR matrices.
    """
    potential.check(channel.dim)
    gamma = enrichment_exponent(channel, potential, enrich)
    basis = RadialBasis(channel, mesh, None, cutoffs)
    r = basis.r
    v = potential.v(r)
    n = mesh.size
    A, K = basis.val, basis.kin
    uu = basis.weighted(A, A, 1.0 + v)
    ll = basis.weighted(A, A, -1.0 + v)
    ul = basis.weighted(K, A, np.ones_like(r))  # upper test (K f), lower trial g
    gram = basis.gram()
    H = sparse.bmat([[uu, ul], [ul.T, ll]], format="lil")
    G = sparse.bmat([[gram, None], [None, gram]], format="lil")
    if gamma is not None:
        nu = potential.nu_bound
        ratio = (gamma - channel.kappa) / nu
        rich = RadialBasis(channel, mesh, gamma, cutoffs)
        ev = rich.val[:, n].toarray().ravel()
        ek = rich.kin[:, n].toarray().ravel()
        rr, ww = rich.r, rich.w
        vv = potential.v(rr)
        Ar, Kr = rich.val[:, :n], rich.kin[:, :n]
        # spinor (e, ratio*e) against (hat, 0) and (0, hat)
        h_up = Ar.T @ (ww * ((1.0 + vv) * ev)) + Kr.T @ (ww * ratio * ev)
        h_lo = Ar.T @ (ww * ek) + Ar.T @ (ww * (-1.0 + vv) * ratio * ev)
        h_ee = np.sum(ww * ((1.0 + vv) * ev**2 + 2.0 * ratio * ek * ev + (-1.0 + vv) * ratio**2 * ev**2))
        g_up = Ar.T @ (ww * ev)
        g_lo = ratio * g_up
        g_ee = (1.0 + ratio**2) * np.sum(ww * ev**2)
        H = sparse.bmat([[H, np.concatenate([h_up, h_lo])[:, None]],
                         [np.concatenate([h_up, h_lo])[None, :], np.array([[h_ee]])]], format="lil")
        G = sparse.bmat([[G, np.concatenate([g_up, g_lo])[:, None]],
                         [np.concatenate([g_up, g_lo])[None, :], np.array([[g_ee]])]], format="lil")
    H, G = H.tocsr(), G.tocsr()
    return 0.5 * (H + H.T), 0.5 * (G + G.T)


def derivative_matrix(channel: Channel, mesh: RadialMesh, enrich_gamma: float | None = None) -> sparse.csr_matrix:
    """``P_ab = int b_a b_b' dr``; antisymmetric for bases vanishing at both ends."""
    basis = RadialBasis(channel, mesh, enrich_gamma)
    return basis.weighted(basis.val, basis.dval, np.ones_like(basis.r))


# ---------------------------------------------------------------------------
# spinors and core functions


@dataclass(frozen=True)
class RadialSpinor:
    """Upper/lower channel profiles sampled at radii ``r``.

    ``lower`` may be complex: it carries the ``diag(1, i)`` phase of the
    channel representation.
    """

    r: np.ndarray
    upper: np.ndarray
    lower: np.ndarray
    channel: Channel

    def norm2(self) -> float:
        dens = np.abs(self.upper) ** 2 + np.abs(self.lower) ** 2
        return float(integrate.trapezoid(dens, self.r))


def _core_exponent(dim: int, nu: float) -> float:
    crit = critical_coupling(dim)
    if dim == 2:
        trivial = nu <= 0
    else:
        trivial = nu <= math.sqrt(3.0) / 2.0
    if trivial:
        raise OutOfCoreBranch(f"(dim={dim}, nu={nu}) is in the trivial branch of the operator core")
    if nu > crit + 1e-15:
        raise DomainError(f"nu={nu} exceeds the critical coupling {crit}")
    return math.sqrt(max(0.0, crit**2 - nu**2))


def core_channel(dim: int, m_label) -> Channel:
    """Upper-spinor channel occupied by the core function with label ``m``."""
    if dim == 2:
        m = float(m_label)
        if m not in (-0.5, 0.5):
            raise DomainError("2D m-label must be +-1/2")
        return Channel.from_index(2, int(-(m + 0.5)))
    m1, m2 = m_label
    if m1 not in (-0.5, 0.5) or m2 not in (-0.5, 0.5):
        raise DomainError("3D m-label must be a pair of +-1/2")
    return Channel.from_index(3, (int(0.5 + m2), -m2))


def zeta_channel_profile(dim: int, nu: float, m_label, r, cutoffs: CutoffPair = DEFAULT_CUTOFFS) -> RadialSpinor:
    """Channel profiles of the extra core function ``zeta^nu_{n,m}``.

    Upper ``nu xi r^sigma``; lower ``-i (sigma + (-1)^(1/2-m)/(4-n)) xi r^sigma``
    with ``sigma = sqrt((4-n)^-2 - nu^2)``; the lower channel is the partner
    of the upper one.
    """
    sigma = _core_exponent(dim, nu)
    ch = core_channel(dim, m_label)
    m = float(m_label) if dim == 2 else m_label[1]
    sign = 1.0 if m == 0.5 else -1.0
    r = np.asarray(r, dtype=float)
    base = cutoffs.xi(r) * r**sigma
    upper = nu * base
    lower = -1j * (sigma + sign * critical_coupling(dim)) * base
    return RadialSpinor(r, upper, lower, ch)


@dataclass(frozen=True)
class AnalyticProfile:
    """Upper radial profile given by callables, with breakpoints for quadrature.

    ``smooth`` promises vectorised callables that are smooth between
    breakpoints (and vanish on the first piece if it starts at 0), so a
    fixed composite Gauss rule can replace adaptive quadrature.
    """

    f: Callable
    df: Callable
    breakpoints: tuple
    smooth: bool = False


def varsigma_profile(dim: int, nu: float, m_label, k: int, cutoffs: CutoffPair = DEFAULT_CUTOFFS) -> AnalyticProfile:
    """``upsilon_k(r) r^sigma``: the k-th member of the approximating core sequence."""
    sigma = _core_exponent(dim, nu)
    core_channel(dim, m_label)
    if k < 1:
        raise DomainError("k must be a positive integer")

    def f(r):
        r = np.asarray(r, dtype=float)
        return cutoffs.upsilon_k(k, r) * r**sigma

    def df(r):
        r = np.asarray(r, dtype=float)
        return cutoffs.dupsilon_k(k, r) * r**sigma + sigma * cutoffs.upsilon_k(k, r) * r ** (sigma - 1.0)

    return AnalyticProfile(f, df, (0.25 / k, 0.5 / k, 1.0 / k, 1.0, 2.0), smooth=True)


def _quad_pieces(fun, pts, tol=1e-13):
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        with warnings.catch_warnings():
            # the error estimate is checked below
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(fun, a, b, epsabs=1e-15, epsrel=tol, limit=400)
        if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
            raise QuadratureFailure(f"radial integral on [{a}, {b}] did not converge (err={err:.2e})")
        total += val
    return total


_SMOOTH_X, _SMOOTH_W = np.polynomial.legendre.leggauss(40)


def _gauss_pieces(fun, pts, sub: int = 16) -> float:
    """Composite 40-point Gauss rule, ``sub`` equal panels per piece; ``fun`` takes arrays."""
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        edges = np.linspace(a, b, sub + 1)
        half = 0.5 * np.diff(edges)[:, None]
        x = 0.5 * (edges[1:] + edges[:-1])[:, None] + half * _SMOOTH_X
        total += float(np.sum(half * _SMOOTH_W * fun(x)))
    return total


def q_nu_channel(channel: Channel, nu: float, f, mesh: RadialMesh | None = None) -> float:
    """Single-channel restriction of the critical Hardy-Dirac form ``q^nu_n``.

    ``f`` is either a coefficient vector on ``mesh`` (hats, plus the
    enrichment column if it has one more entry) or an :class:`AnalyticProfile`.
    """
    dim = channel.dim
    crit = critical_coupling(dim)
    if nu < 0 or nu > crit + 1e-15:
        raise DomainError(f"nu={nu} outside [0, {crit}]")
    lam = ground_state_energy(dim, nu)
    kappa = channel.kappa

    def density(r, fv, kv):
        # 1/(1 + lam + nu/r) written as r/((1+lam) r + nu)
        return kv**2 * r / ((1.0 + lam) * r + nu) + (1.0 - lam - nu / r) * fv**2

    if isinstance(f, AnalyticProfile) and f.smooth:
        def vec(r):
            fv = f.f(r)
            return density(r, fv, f.df(r) - kappa * fv / r)
        return _gauss_pieces(vec, [0.0] + [p for p in f.breakpoints if p > 0])
    if isinstance(f, AnalyticProfile):
        def integrand(r):
            fv = f.f(r)
            kv = f.df(r) - kappa * fv / r
            return float(density(r, fv, kv))
        pts = [0.0] + [p for p in f.breakpoints if p > 0]
        return _quad_pieces(integrand, pts)
    if mesh is None:
        raise ValueError("coefficient vectors need a mesh")
    coeffs = np.asarray(f, dtype=float)
    gamma = None
    if coeffs.size == mesh.size + 1:
        gamma = math.sqrt(kappa**2 - nu**2)
        if gamma == 0:
            raise QuadratureFailure("enrichment with gamma = 0 is not integrable term by term")
    elif coeffs.size != mesh.size:
        raise ValueError("coefficient vector does not match the mesh")
    basis = RadialBasis(channel, mesh, gamma)
    fv, _, kv = basis.evaluate(coeffs)
    return float(np.sum(basis.w * density(basis.r, fv, kv)))


def core_rhs_value(dim: int, nu: float, k: int, cutoffs: CutoffPair = DEFAULT_CUTOFFS) -> float:
    """Upper comparison integral for ``varsigma_k`` in its unsimplified channel form.

    int t^n/nu |d/dt(upsilon_k t^(sigma - 1/(4-n)))|^2 - nu upsilon_k^2 t^(2 sigma - 1)
        + upsilon_k^2 t^(2 sigma) dt
    """
    sigma = _core_exponent(dim, nu)
    a = 1.0 / (4 - dim)
    e = sigma - a

    def integrand(t):
        u = cutoffs.upsilon_k(k, t)
        du = cutoffs.dupsilon_k(k, t)
        d = du * t**e + e * u * t ** (e - 1.0)
        return t**dim / nu * d * d - nu * u * u * t ** (2 * sigma - 1.0) + u * u * t ** (2 * sigma)

    return _gauss_pieces(integrand, [0.25 / k, 0.5 / k, 1.0 / k, 1.0, 2.0])


def analytic_core_bound(dim: int, nu: float, cutoffs: CutoffPair = DEFAULT_CUTOFFS) -> float:
    """``nu^-1 int upsilon'^2 t^(2 sigma + 1) dt + int xi^2 t^(2 sigma) dt``."""
    sigma = _core_exponent(dim, nu)

    def first(t):
        return float(cutoffs.dupsilon(t)) ** 2 * t ** (2 * sigma + 1.0)

    def second(t):
        return float(cutoffs.xi(t)) ** 2 * t ** (2 * sigma)

    return _quad_pieces(first, [0.25, 0.5, 1.0, 2.0]) / nu + _quad_pieces(second, [0.0, 1.0, 2.0])
