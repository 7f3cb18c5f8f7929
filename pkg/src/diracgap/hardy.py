"""Hardy-Dirac functional on single-channel upper profiles.

For an upper profile ``f`` in a channel with kinetic factor
``K f = f' - kappa f / r`` the functional is

    J(lam) = int |K f|^2 / (1 + lam - v) + (1 - lam + v) |f|^2 dr,

the same form the Talman solver roots.  At ``lam = lam(v)`` (the lowest gap
eigenvalue) it is non-negative on every profile and vanishes on the ground
state.  For Coulomb potentials ``lam(nu) = sqrt(1 - ((4-n) nu)^2)``, which
stays meaningful at the critical coupling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import Channel, enumerate_channels
from .errors import DenominatorSignError, DomainError
from .minimax import TalmanProblem, talman_eigenvalue, talman_profile
from .radial import (
    DEFAULT_CUTOFFS,
    AnalyticProfile,
    PotentialSpec,
    RadialMesh,
    _quad_pieces,
    critical_coupling,
    ground_state_energy,
)


def _problem(channel, potential, mesh, enrich):
    if enrich is None and potential.nu_bound >= critical_coupling(channel.dim):
        # at the endpoint the cut-off extension column is not square integrable against 1/r
        enrich = False
    return TalmanProblem(channel, potential, mesh, enrich)


def hardy_J(channel: Channel, potential: PotentialSpec, f, lam: float, mesh: RadialMesh,
            enrich: bool | None = None, problem: TalmanProblem | None = None) -> float:
    """J at ``lam`` for coefficient vector ``f``; this is the Talman Schur form applied to ``f``."""
    if lam <= -1:
        raise DenominatorSignError(f"1 + lam - v must stay positive; lam={lam} <= -1")
    prob = problem or _problem(channel, potential, mesh, enrich)
    return prob.schur(lam)(f)


def hardy_scale(problem: TalmanProblem, f, lam: float) -> float:
    """Magnitude of the two integrals in J with ``|v|`` in place of ``v``; slack reference."""
    b = problem.basis
    fv, _, kv = b.evaluate(f)
    wk, _ = problem.weights(lam)
    return float(np.sum(b.w * (kv**2 * wk + (1.0 + np.abs(problem.v)) * fv**2)))


def optimal_lower(channel: Channel, potential: PotentialSpec, f, lam: float, mesh: RadialMesh,
                  enrich: bool | None = None, problem: TalmanProblem | None = None):
    """``(r, (f' - kappa f/r)/(1 + lam - v))`` at the quadrature points."""
    prob = problem or _problem(channel, potential, mesh, enrich)
    wk, _ = prob.weights(lam)
    _, _, kv = prob.basis.evaluate(f)
    return prob.basis.r, kv * wk


def lower_functional(problem: TalmanProblem, f, g, lam: float) -> float:
    """``int 2 g K f - (1 + lam - v) g^2 + (1 - lam + v) f^2``; maximised over ``g`` it is J."""
    b = problem.basis
    fv, _, kv = b.evaluate(f)
    wk, wm = problem.weights(lam)
    return float(np.sum(b.w * (2.0 * g * kv - g * g / wk + wm * fv**2)))


def ground_profile(dim: int, nu: float) -> AnalyticProfile:
    """``r^gamma exp(-(4-n) nu r)``: upper component of the Coulomb ground state."""
    kappa = 1.0 / (4 - dim)
    gamma = math.sqrt(max(0.0, kappa**2 - nu**2))
    rate = (4 - dim) * nu

    def f(r):
        return r**gamma * np.exp(-rate * r)

    def df(r):
        return (gamma / r - rate) * f(r)

    return AnalyticProfile(f, df, (1e-8, 1e-4, 1e-2, 1.0, 10.0, 100.0, 1000.0))


def hardy_J_analytic(channel: Channel, potential: PotentialSpec, profile: AnalyticProfile, lam: float):
    """``(J, scale)`` of an analytic profile by adaptive quadrature."""
    kappa = channel.kappa

    def parts(r):
        fv = profile.f(r)
        kv = profile.df(r) - kappa * fv / r
        rv = float(potential.rv(r))
        return kv * kv * r / ((1.0 + lam) * r - rv), fv * fv, rv / r

    def dens(r):
        a, b, v = parts(r)
        return a + (1.0 - lam + v) * b

    def mag(r):
        a, b, v = parts(r)
        return a + (1.0 + abs(v)) * b

    pts = [0.0] + list(profile.breakpoints)
    return _quad_pieces(dens, pts), _quad_pieces(mag, pts)


@dataclass
class HardyReport:
    dim: int
    nu: float
    lam: float
    values: list
    scales: list
    channels: list
    min_J: float
    min_relative: float
    saturation_residual: float | None
    saturation_analytic: float | None
    potential: dict
    slack: float
    passed: bool
    notes: list = field(default_factory=list)


def random_profiles(rng: np.random.Generator, dim: int, nu: float, mesh: RadialMesh, count: int,
                    kappa_max: float | None = None) -> list[tuple[Channel, np.ndarray]]:
    """Seeded single-channel test profiles.

    Half are generic: three terms ``a r^b exp(-c r)`` plus small node noise,
    in a channel drawn from ``|kappa| <= kappa_max``.  The other half are
    perturbed ground-state shapes ``r^gamma exp(-c r)`` in the ground channel
    with ``c`` near the Coulomb decay rate, where J is close to zero.
    Enriched channels carry the ``r^gamma`` part in the extension column.
    """
    if kappa_max is None:
        kappa_max = 2.0 if dim == 3 else 1.5
    chans = enumerate_channels(dim, kappa_max)
    ground = Channel.from_kappa(dim, 1.0 / (4 - dim))
    gamma = math.sqrt(max(0.0, ground.kappa**2 - nu**2))
    rate = (4 - dim) * nu
    pot = PotentialSpec.coulomb(nu)
    r = mesh.nodes
    out = []
    for i in range(count):
        if i % 2:
            ch = ground
            c = rate * rng.uniform(0.7, 1.5) if rate > 0 else rng.uniform(0.1, 3.0)
            shape = (1.0 + 0.1 * rng.normal(size=r.size) * np.exp(-r)) * r**gamma * np.exp(-c * r)
            prob = _problem(ch, pot, mesh, None)
            if prob.basis.enriched:
                e = 1.0 + 0.1 * rng.normal()
                out.append((ch, np.append(shape - e * DEFAULT_CUTOFFS.xi(r) * r**gamma, e)))
            else:
                out.append((ch, shape))
            continue
        ch = chans[int(rng.integers(len(chans)))]
        a = rng.normal(size=3)
        b = rng.uniform(0.5, 2.5, size=3)
        c = rng.uniform(0.1, 3.0, size=3)
        f = sum(a[k] * r ** b[k] * np.exp(-c[k] * r) for k in range(3))
        f = f + 0.01 * rng.normal(size=r.size) * np.exp(-r)
        prob = _problem(ch, pot, mesh, None)
        if prob.basis.enriched:
            f = np.append(f, rng.normal())
        out.append((ch, f))
    return out


def verify_corollary(dim: int, nu: float, profiles, mesh: RadialMesh, slack: float = 1e-10,
                     saturation: bool = True, saturation_tol: float = 1e-4) -> HardyReport:
    """J at ``lam(nu)`` on every profile, plus the ground-state saturation residual.

    ``profiles`` is a list of ``(channel, coefficients)``.  Passing means
    ``J >= -slack * scale`` for all of them and, when computed, a saturation
    residual ``|J| / scale`` below ``saturation_tol``.
    """
    crit = critical_coupling(dim)
    if not 0 <= nu <= crit:
        raise DomainError(f"nu={nu} outside [0, {crit}]")
    pot = PotentialSpec.coulomb(nu)
    lam = ground_state_energy(dim, nu)
    problems = {}
    values, scales, labels = [], [], []
    for ch, f in profiles:
        if ch not in problems:
            problems[ch] = _problem(ch, pot, mesh, None)
        prob = problems[ch]
        values.append(hardy_J(ch, pot, f, lam, mesh, problem=prob))
        scales.append(hardy_scale(prob, f, lam))
        labels.append(ch.label())
    rel = [v / s for v, s in zip(values, scales)] if values else []
    notes = []
    sat = sat_exact = None
    if saturation and 0 < nu < crit:
        ground = Channel.from_kappa(dim, 1.0 / (4 - dim))
        ev = talman_eigenvalue(1, [ground], pot, mesh)
        coeffs, _ = talman_profile(ground, pot, mesh, ev.kth(1))
        prob = _problem(ground, pot, mesh, None)
        sat = abs(hardy_J(ground, pot, coeffs, lam, mesh, problem=prob)) / hardy_scale(prob, coeffs, lam)
        j_exact, s_exact = hardy_J_analytic(ground, pot, ground_profile(dim, nu), lam)
        sat_exact = abs(j_exact) / s_exact
    elif saturation:
        notes.append("no ground state in the gap to saturate" if nu == 0 else
                     "saturation not tested at the critical endpoint")
    passed = all(r >= -slack for r in rel)
    if sat is not None:
        passed = passed and sat <= saturation_tol
    return HardyReport(
        dim=dim, nu=nu, lam=lam, values=values, scales=scales, channels=labels,
        min_J=min(values) if values else math.inf,
        min_relative=min(rel) if rel else math.inf,
        saturation_residual=sat, saturation_analytic=sat_exact,
        potential={"kind": pot.kind, "nu": nu}, slack=slack, passed=passed, notes=notes,
    )
