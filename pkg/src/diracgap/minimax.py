"""Gap eigenvalues from the two minimax characterisations, and their certificates.

Talman route (configuration space)
    Eliminating the lower spinor at its optimum ``g = (f' - kappa f/r)/(1+lam-v)``
    leaves the form

        b_lam[f] = int |f' - kappa f/r|^2 / (1 + lam - v) + (1 - lam + v) |f|^2 dr

    on upper profiles.  ``b_lam`` decreases strictly in ``lam``; the k-th gap
    eigenvalue is where the k-th eigenvalue of ``(b_lam, Gram)`` crosses
    zero.  By Sylvester's law the number of crossings below ``lam`` equals the
    number of negative pivots of the Schur matrix, so the roots are bracketed
    and bisected on that count, which needs no eigenvector tracking even when
    curves cross.

Esteban-Sere route (momentum space)
    Each channel pair ``(j, T j)`` is expanded in cellwise-constant spinors
    along the positive and negative free eigenvectors at the cell midpoints.
    The negative block is eliminated by a Schur complement that is well
    defined for ``lam > -1`` and the same counting bisection is applied.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from .channels import Channel, coupling_c
from .errors import (
    ConvergenceFailure,
    DenominatorSignError,
    InvalidPotential,
    NegativeBlockNotDefinite,
    NoEigenvalueInGap,
)
from .kernel import MomentumMesh, assemble_coulomb_form, assemble_p_form, kato_constant
from .radial import PotentialSpec, RadialBasis, RadialMesh, assemble_channel_operator, enrichment_exponent

log = logging.getLogger(__name__)

SCAN_POINTS = 64
EDGE_GAP = 1e-3
MAX_BISECTIONS = 200


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get("DIRACGAP_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Talman: configuration-space Schur form


@dataclass(frozen=True)
class SchurForm:
    lam: float
    matrix: sparse.csr_matrix
    gram: sparse.csr_matrix
    channel: Channel
    potential: PotentialSpec
    basis: RadialBasis = field(repr=False)

    def __call__(self, coeffs) -> float:
        c = np.asarray(coeffs)
        return float(c @ (self.matrix @ c))


class TalmanProblem:
    """Quadrature data for one channel, reused across all ``lam`` evaluations."""

    def __init__(self, channel: Channel, potential: PotentialSpec, mesh: RadialMesh, enrich: bool | None = None):
        self.channel = channel
        self.potential = potential
        self.mesh = mesh
        gamma = enrichment_exponent(channel, potential, enrich)
        self.basis = RadialBasis(channel, mesh, gamma)
        b = self.basis
        self.rv = potential.rv(b.r)
        self.v = self.rv / b.r
        self.gram = b.gram()
        self._kk = b.kin.T.tocsr()
        self._aa = b.val.T.tocsr()

    def weights(self, lam: float):
        r = self.basis.r
        denom = (1.0 + lam) * r - self.rv  # r (1 + lam - v)
        if np.any(denom <= 0):
            raise DenominatorSignError(f"1 + lam - v <= 0 somewhere on the mesh (lam={lam})")
        return r / denom, 1.0 - lam + self.v

    def form_density(self, lam: float, fv, kv):
        wk, wm = self.weights(lam)
        return kv**2 * wk + wm * fv**2

    def schur(self, lam: float) -> SchurForm:
        b = self.basis
        wk, wm = self.weights(lam)
        mat = self._kk @ sparse.diags(b.w * wk) @ b.kin + self._aa @ sparse.diags(b.w * wm) @ b.val
        mat = mat.tocsr()
        mat = 0.5 * (mat + mat.T)
        return SchurForm(lam, mat, self.gram, self.channel, self.potential, b)

    def negative_count(self, lam: float) -> int:
        return _negative_count(self.schur(lam).matrix, self.mesh.size)


def talman_schur(channel: Channel, potential: PotentialSpec, mesh: RadialMesh, lam: float,
                 enrich: bool | None = None) -> SchurForm:
    """Reduced form ``b_lam`` on the upper-component basis (enrichment included when flagged)."""
    if not -1.0 < lam < 1.0:
        raise DenominatorSignError(f"lam must lie in (-1, 1), got {lam}")
    return TalmanProblem(channel, potential, mesh, enrich).schur(lam)


def _tridiag_negative_count(diag: np.ndarray, off: np.ndarray) -> int:
    count = 0
    d_prev = 1.0
    tiny = np.finfo(float).tiny ** 0.5
    for i in range(diag.size):
        d = diag[i] - (off[i - 1] ** 2 / d_prev if i else 0.0)
        if d == 0.0:
            d = -tiny
        if d < 0:
            count += 1
        d_prev = d
    return count


def _negative_count(mat: sparse.csr_matrix, n_band: int) -> int:
    """Negative eigenvalues of a tridiagonal matrix bordered by dense trailing rows."""
    dense_tail = mat.shape[0] - n_band
    main = mat[:n_band, :n_band]
    diag = main.diagonal()
    off = main.diagonal(1)
    count = _tridiag_negative_count(diag, off)
    if dense_tail == 0:
        return count
    border = mat[:n_band, n_band:].toarray()
    corner = mat[n_band:, n_band:].toarray()
    ab = np.zeros((3, n_band))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    sol = linalg.solve_banded((1, 1), ab, border)
    schur = corner - border.T @ sol
    return count + int(np.sum(linalg.eigvalsh(schur) < 0))


# ---------------------------------------------------------------------------
# root finding shared by both routes


@dataclass
class ChannelEigenvalue:
    lam: float
    residual: float
    iterations: int
    channel: Channel
    level: int


@dataclass
class GapSpectrumResult:
    """Per-channel gap eigenvalues and the degeneracy-weighted merged list."""

    method: str
    per_channel: dict
    merged: list
    mesh_info: dict
    kappa_max: float | None = None
    certified_count: int | None = None

    def kth(self, k: int) -> float:
        return self.merged[k - 1][0]

    def kth_entry(self, k: int):
        return self.merged[k - 1]

    def distinct(self, rel_tol: float = 1e-4) -> list[float]:
        out = []
        for lam, *_ in self.merged:
            if not out or abs(lam - out[-1]) > rel_tol * abs(lam):
                out.append(lam)
        return out


def _find_roots(count_fn, tol: float, lo: float = -1.0 + EDGE_GAP, hi: float = 1.0 - EDGE_GAP,
                max_levels: int | None = None, scan: int = SCAN_POINTS):
    """Return ``(lam, bracket_width, iterations)`` for every count jump in ``(lo, hi)``."""
    grid = np.linspace(lo, hi, scan)
    counts = [count_fn(x) for x in grid]
    base = counts[0]
    if base != 0:
        log.warning("%d eigenvalue(s) below the scan window start %.4f", base, lo)
    top = counts[-1]
    if max_levels is not None:
        top = min(top, base + max_levels)
    roots = []
    for level in range(base + 1, top + 1):
        i = next(idx for idx, c in enumerate(counts) if c >= level)
        a, b = grid[i - 1], grid[i]
        it = 0
        while b - a > tol:
            it += 1
            if it > MAX_BISECTIONS:
                raise ConvergenceFailure(f"bisection did not reach tol={tol} (width {b - a:.3e})")
            mid = 0.5 * (a + b)
            c = count_fn(mid)
            if c >= level:
                b = mid
            else:
                a = mid
        roots.append((0.5 * (a + b), b - a, it))
    return roots


def _merge(method: str, per_channel: dict, channels: list[Channel], mesh_info: dict, kappa_max, nu_bound: float):
    entries = []
    for ch in channels:
        for ev in per_channel[ch]:
            entries.extend([(ev.lam, ch, ev.residual)] * ch.degeneracy)
    entries.sort(key=lambda e: (e[0], abs(e[1].kappa), e[1].kappa))
    certified = None
    if kappa_max is not None:
        # smallest |kappa| not enumerated; Coulomb levels there bound all omitted channels
        if channels[0].dim == 3:
            next_kappa = math.floor(kappa_max + 1e-12) + 1.0
        else:
            next_kappa = math.floor(kappa_max - 0.5 + 1e-12) + 1.5
        floor = math.sqrt(max(0.0, 1.0 - (nu_bound / next_kappa) ** 2))
        certified = sum(1 for e in entries if e[0] < floor)
    return GapSpectrumResult(method, per_channel, entries, mesh_info, kappa_max, certified)


def _select(result: GapSpectrumResult, k: int) -> GapSpectrumResult:
    if not result.merged:
        raise NoEigenvalueInGap("no eigenvalue found in the gap")
    if k > len(result.merged):
        raise NoEigenvalueInGap(f"only {len(result.merged)} eigenvalue(s) in the gap, asked for k={k}")
    return result


def _run_channels(solve, channels, threads):
    threads = threads or default_threads()
    if threads == 1 or len(channels) == 1:
        return {ch: solve(ch) for ch in channels}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(solve, channels))
    return dict(zip(channels, results))


def talman_eigenvalue(k: int, channels: list[Channel], potential: PotentialSpec, mesh: RadialMesh,
                      tol: float = 1e-10, kappa_max: float | None = None, enrich: bool | None = None,
                      threads: int | None = None) -> GapSpectrumResult:
    """Gap eigenvalues up to the k-th via Schur root finding in every channel."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not channels:
        raise ValueError("need at least one channel")
    potential.check(channels[0].dim)

    def solve(ch):
        prob = TalmanProblem(ch, potential, mesh, enrich)
        roots = _find_roots(prob.negative_count, tol, max_levels=k)
        return [ChannelEigenvalue(lam, width, it, ch, i + 1) for i, (lam, width, it) in enumerate(roots)]

    per = _run_channels(solve, channels, threads)
    info = {"kind": "radial", "size": mesh.size, "r_min": mesh.r_min, "r_max": mesh.r_max}
    return _select(_merge("talman", per, channels, info, kappa_max, potential.nu_bound), k)


def talman_profile(channel: Channel, potential: PotentialSpec, mesh: RadialMesh, lam: float,
                   enrich: bool | None = None):
    """Upper-profile coefficients spanning the (near) null space of ``b_lam``.

    Returns ``(coeffs, rho)`` with ``rho`` the Schur eigenvalue closest to zero,
    coefficients normalised to unit ``L^2`` norm and positive near the origin.
    """
    prob = TalmanProblem(channel, potential, mesh, enrich)
    form = prob.schur(lam)
    try:
        # fixed start vector: ARPACK's default is random and breaks reproducible output
        v0 = np.ones(form.matrix.shape[0])
        vals, vecs = splinalg.eigsh(form.matrix.tocsc(), k=1, M=form.gram.tocsc(), sigma=0.0, which="LM", v0=v0)
        rho, vec = float(vals[0]), vecs[:, 0]
    except Exception:  # pragma: no cover - dense fallback
        vals, vecs = linalg.eigh(form.matrix.toarray(), form.gram.toarray())
        i = int(np.argmin(np.abs(vals)))
        rho, vec = float(vals[i]), vecs[:, i]
    vec = vec / math.sqrt(float(vec @ (form.gram @ vec)))
    fv = prob.basis.val @ vec
    lead = fv[np.argmax(np.abs(fv) > 1e-8 * np.abs(fv).max())]
    if lead < 0:
        vec = -vec
    return vec, rho



@dataclass
class GalerkinScreen:
    """Gap eigenvalues of the two-component pair ``(H, G)`` split by Schur confirmation."""

    channel: Channel
    accepted: list
    suspected: list
    reference: list


def screen_galerkin(channel: Channel, potential: PotentialSpec, mesh: RadialMesh, match_tol: float = 1e-3,
                    enrich: bool | None = None, tol: float = 1e-10) -> GalerkinScreen:
    """Keep gap eigenvalues of the full Galerkin pair only where the Schur route reproduces them.

    Two-component discretisations can pollute the gap; an eigenvalue with no
    Schur root within ``match_tol`` is reported in ``suspected``.
    """
    H, G = assemble_channel_operator(channel, potential, mesh, enrich)
    vals = linalg.eigh(H.toarray(), G.toarray(), eigvals_only=True)
    inside = [float(x) for x in vals if -1.0 < x < 1.0]
    prob = TalmanProblem(channel, potential, mesh, enrich)
    ref = [lam for lam, _, _ in _find_roots(prob.negative_count, tol)]
    accepted, suspected = [], []
    for x in inside:
        ok = any(abs(x - y) <= match_tol for y in ref)
        (accepted if ok else suspected).append(x)
    if suspected:
        log.warning("%d suspected spurious eigenvalue(s) in channel %s", len(suspected), channel.label())
    return GalerkinScreen(channel, accepted, suspected, ref)

# ---------------------------------------------------------------------------
# Esteban-Sere: momentum-space free-subspace blocks


@dataclass(frozen=True)
class MomentumBlockOperator:
    """Blocks of the channel-pair operator on positive/negative free spinors."""

    A_pp: np.ndarray
    A_mm: np.ndarray
    A_pm: np.ndarray
    G_pp: np.ndarray
    G_mm: np.ndarray
    channel: Channel
    mesh: MomentumMesh

    def full(self):
        A = np.block([[self.A_pp, self.A_pm], [self.A_pm.T, self.A_mm]])
        G = np.block([[self.G_pp, np.zeros_like(self.A_pm)], [np.zeros_like(self.A_pm), self.G_mm]])
        return A, G

    @cached_property
    def _scaled(self):
        # congruence by diag(w s)^(-1/2): same inertia, O(1) entries at every momentum
        d = 1.0 / np.sqrt(np.diag(self.A_pp) - np.diag(self.A_mm)) * math.sqrt(2.0)
        D = d[:, None] * d[None, :]
        return self.A_pp * D, self.A_mm * D, self.A_pm * D, np.diag(self.G_pp) * d * d, np.diag(self.G_mm) * d * d, d

    def _schur_parts(self, lam: float, A_pp, A_mm, A_pm, g_pp, g_mm):
        X = lam * np.diag(g_mm) - A_mm
        try:
            L = linalg.cholesky(X, lower=True, check_finite=False)
        except linalg.LinAlgError:
            raise NegativeBlockNotDefinite(f"A_mm - lam G_mm is not negative definite at lam={lam}") from None
        Y = linalg.solve_triangular(L, A_pm.T, lower=True, check_finite=False)
        S = A_pp - lam * np.diag(g_pp) + Y.T @ Y
        return 0.5 * (S + S.T)

    def schur(self, lam: float) -> np.ndarray:
        """``A_pp - lam G_pp - A_pm (A_mm - lam G_mm)^{-1} A_pm^T``."""
        A_pp, A_mm, A_pm, g_pp, g_mm, d = self._scaled
        S = self._schur_parts(lam, A_pp, A_mm, A_pm, g_pp, g_mm)
        return S / (d[:, None] * d[None, :])

    def negative_count(self, lam: float) -> int:
        return _dense_negative_count(self._schur_parts(lam, *self._scaled[:5]))


def _dense_negative_count(S: np.ndarray) -> int:
    """Inertia from a Bunch-Kaufman factorisation; ``D`` is tridiagonal with 2x2 blocks."""
    _, D, _ = linalg.ldl(S, lower=True, check_finite=False)
    sub = np.diagonal(D, -1).copy()
    if not np.any(sub):
        return int(np.sum(np.diagonal(D) < 0))
    return int(np.sum(linalg.eigvalsh_tridiagonal(np.diagonal(D).copy(), sub) < 0))


def free_spinor_angles(p):
    """``(cos, sin)`` of the normalised positive free spinor ``(1, p/(1+sqrt(1+p^2)))``."""
    p = np.asarray(p, dtype=float)
    a = p / (1.0 + np.sqrt(1.0 + p * p))
    c = 1.0 / np.sqrt(1.0 + a * a)
    return c, a * c


def esteban_sere_assemble(channel: Channel, potential: PotentialSpec, mesh: MomentumMesh) -> MomentumBlockOperator:
    """Channel-pair blocks; Coulomb coupling via the Galerkin forms of ``q_j``."""
    if potential.kind != "coulomb":
        raise InvalidPotential("the momentum-space route supports Coulomb potentials only")
    potential.check(channel.dim)
    nu = potential.nu_bound
    p, w = mesh.nodes, mesh.weights
    s = np.sqrt(1.0 + p * p)
    c, sn = free_spinor_angles(p)
    A_pp = np.diag(w * s)
    A_mm = -np.diag(w * s)
    A_pm = np.zeros_like(A_pp)
    if nu > 0:
        Qu = assemble_coulomb_form(channel.order, mesh).entries
        Ql = assemble_coulomb_form(channel.partner.order, mesh).entries
        C, S = c[:, None], sn[:, None]
        A_pp = A_pp - nu * (C * Qu * C.T + S * Ql * S.T)
        A_mm = A_mm - nu * (S * Qu * S.T + C * Ql * C.T)
        A_pm = A_pm - nu * (-(C * Qu * S.T) + S * Ql * C.T)
    G = np.diag(w)
    return MomentumBlockOperator(A_pp, A_mm, A_pm, G, G.copy(), channel, mesh)


def esteban_sere_eigenvalue(k: int, channels: list[Channel], potential: PotentialSpec, mesh: MomentumMesh,
                            tol: float = 1e-10, kappa_max: float | None = None,
                            threads: int | None = None) -> GapSpectrumResult:
    """Gap eigenvalues up to the k-th from the free-projection minimax in momentum space."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not channels:
        raise ValueError("need at least one channel")
    potential.check(channels[0].dim)

    def solve(ch):
        op = esteban_sere_assemble(ch, potential, mesh)
        roots = _find_roots(op.negative_count, tol, max_levels=k)
        return [ChannelEigenvalue(lam, width, it, ch, i + 1) for i, (lam, width, it) in enumerate(roots)]

    per = _run_channels(solve, channels, threads)
    info = {"kind": "momentum", "size": mesh.size, "p_min": mesh.p_min, "p_max": mesh.p_max}
    return _select(_merge("esteban-sere", per, channels, info, kappa_max, potential.nu_bound), k)


# ---------------------------------------------------------------------------
# explicit trial maps and certificates (momentum channel representation)


def apply_L(dim: int, profiles: dict) -> dict:
    """Upper-to-lower trial map: channel ``j`` feeds ``T j`` scaled by ``c_{T j}``."""
    from .channels import apply_T

    out = {}
    for j, prof in profiles.items():
        tj = apply_T(dim, j)
        out[tj] = coupling_c(dim, tj) * np.asarray(prof)
    return out


def g_multiplier(c: float, p):
    """``(1 - c p + sqrt(1+p^2)) / (c + p + c sqrt(1+p^2))``."""
    p = np.asarray(p, dtype=float)
    s = np.sqrt(1.0 + p * p)
    return (1.0 - c * p + s) / (c + p + c * s)


def apply_G(dim: int, spinors: dict, p) -> dict:
    """Positive-to-negative trial map on W-channel spinors ``{j: (2, M) array}``.

    Each channel is rotated by ``[[0, -1], [1, 0]]`` and scaled by the
    multiplier built from ``c_{n,j}``.
    """
    out = {}
    for j, psi in spinors.items():
        psi = np.asarray(psi)
        e = g_multiplier(coupling_c(dim, j), p)
        out[j] = np.array([-e * psi[1], e * psi[0]])
    return out


def positive_spinor(p, zeta):
    p = np.asarray(p, dtype=float)
    return np.array([zeta, zeta * p / (1.0 + np.sqrt(1.0 + p * p))])


def negative_spinor(p, zeta):
    p = np.asarray(p, dtype=float)
    return np.array([-zeta * p / (1.0 + np.sqrt(1.0 + p * p)), zeta])


def es_relation_check(dim: int, chi: dict, p) -> tuple[float, float]:
    """Residual of ``L (phi + G phi)_1 = (phi + G phi)_2`` for ``phi`` in the positive subspace.

    ``chi`` maps W-channel indices to profiles on the sample momenta ``p``.
    Returns ``(relation_residual, ratio_residual)``: the first is the relative
    norm mismatch, the second the worst deviation of the per-channel
    lower/upper ratio from ``c_{T j}`` after ``(1 + E)``.
    """
    from .channels import apply_T

    p = np.asarray(p, dtype=float)
    phi = {j: positive_spinor(p, z) for j, z in chi.items()}
    g = apply_G(dim, phi, p)
    total = {j: phi[j] + g[j] for j in phi}
    norm = math.sqrt(sum(float(np.sum(np.abs(v) ** 2)) for v in phi.values()))
    if norm == 0:
        return 0.0, 0.0
    # W-channel j holds (upper channel j, lower channel T j)
    upper = {j: v[0] for j, v in total.items()}
    lower = {apply_T(dim, j): v[1] for j, v in total.items()}
    mapped = apply_L(dim, upper)
    diff = 0.0
    for key in set(mapped) | set(lower):
        a = mapped.get(key, 0.0)
        b = lower.get(key, 0.0)
        diff += float(np.sum(np.abs(np.asarray(a) - np.asarray(b)) ** 2))
    ratio = 0.0
    for j, v in total.items():
        target = coupling_c(dim, apply_T(dim, j))
        up = v[0]
        mask = np.abs(up) > 1e-300
        if np.any(mask):
            ratio = max(ratio, float(np.max(np.abs(v[1][mask] / up[mask] - target))))
    return math.sqrt(diff) / norm, ratio


def tilde_chi_factor(c: float, p):
    """Scalar relating ``(1 + E)`` output to ``chi``: ``c (p^2 + (1+s)^2) / ((1+s)(c + p + c s))``."""
    p = np.asarray(p, dtype=float)
    s = np.sqrt(1.0 + p * p)
    return c * (p * p + (1.0 + s) ** 2) / ((1.0 + s) * (c + p + c * s))


@dataclass(frozen=True)
class CertificateForms:
    """Cached Galerkin forms used by the lower-bound certificate."""

    mesh: MomentumMesh
    p_form: np.ndarray
    coulomb: dict

    @classmethod
    def build(cls, mesh: MomentumMesh, orders) -> "CertificateForms":
        return cls(mesh, assemble_p_form(mesh).entries,
                   {o: assemble_coulomb_form(o, mesh).entries for o in sorted(set(orders))})


def talman_certificate(dim: int, phi: dict, forms: CertificateForms) -> tuple[float, float]:
    """Lower-bound certificate for the Talman trial map on a multi-channel ``phi``.

    ``phi`` maps upper channel indices to cell coefficient vectors.  Returns
    ``(residual, scale)`` where

        residual = d[(phi, L phi)] - Coulomb[(phi, L phi)]/(4-n)
                   - (c^2 - 1)/(c^2 + 1) ||(phi, L phi)||^2

    with kinetic, mass and Coulomb parts evaluated channel by channel, and
    ``scale`` the sum of the magnitudes of those parts.
    """
    from .channels import apply_T, coulomb_order

    c = kato_constant(dim)
    gap = (c * c - 1.0) / (c * c + 1.0)
    w = forms.mesh.weights
    P = forms.p_form
    kinetic = mass = coul = norm = 0.0
    for j, f in phi.items():
        f = np.asarray(f, dtype=float)
        tj = apply_T(dim, j)
        ct = coupling_c(dim, tj)
        l2 = float(np.sum(w * f * f))
        kinetic += 2.0 * ct * float(f @ P @ f)
        mass += (1.0 - ct * ct) * l2
        norm += (1.0 + ct * ct) * l2
        qu = forms.coulomb[coulomb_order(dim, j)]
        ql = forms.coulomb[coulomb_order(dim, tj)]
        coul += float(f @ qu @ f) + ct * ct * float(f @ ql @ f)
    residual = kinetic + mass - coul / (4 - dim) - gap * norm
    scale = abs(kinetic) + abs(mass) + coul / (4 - dim) + abs(gap) * norm
    return residual, scale
