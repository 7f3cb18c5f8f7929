"""Command-line front end: ``diracgap <command> [options]``.

Channel numbers on the command line and in reports use the usual Dirac
sign convention (3D ground state at ``kappa = -1``).

Every command writes one report (JSON by default, CSV on request) to
``--output`` or stdout.  Settings come from built-in defaults, then a JSON
``--config`` file, then explicit flags.  Exit codes: 0 success, 1 bad
configuration, 2 no eigenvalue in the gap, 3 convergence failure,
4 property violation.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import hardy, kernel, minimax, radial
from .channels import Channel, enumerate_channels
from .errors import DiracGapError, OutOfCoreBranch
from .kernel import MomentumMesh
from .radial import PotentialSpec, RadialMesh, critical_coupling

log = logging.getLogger("diracgap")

DEFAULT_SEED = 20240917
COMMANDS = ("eigenvalues", "hardy-check", "kernel-check", "core-check", "certificate", "sweep")
SWEEP_TOL = 1e-4
NEAR_CRITICAL = 0.95


class ConfigError(DiracGapError):
    pass


@dataclass
class RunConfig:
    dim: int = 3
    nu: float = 0.5
    table: str | None = None
    kappa: float | None = None
    kappa_max: float | None = None
    k: int = 1
    r_min: float = 1e-6
    r_max: float | None = None
    n: int = 1000
    p_min: float | None = None
    p_max: float = 1e8
    m: int = 600
    method: str = "talman"
    tol: float = 1e-10
    seed: int = DEFAULT_SEED
    count: int = 100
    format: str = "json"
    output: str | None = None
    threads: int | None = None
    nus: list = field(default_factory=list)
    timing: bool = False

    def validate(self, command: str) -> None:
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        crit = critical_coupling(self.dim)
        if not 0 <= self.nu <= crit:
            raise ConfigError(f"nu must lie in [0, {crit}] for dim={self.dim}")
        if command in ("eigenvalues",) and self.nu >= crit:
            raise ConfigError(f"eigenvalue commands need nu < {crit}")
        if self.method not in ("talman", "esteban-sere", "both"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.k < 1 or self.n < 2 or self.m < 2 or self.count < 0:
            raise ConfigError("k, n, m must be positive and count non-negative")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")

    def public(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("output", "threads", "format"):
            d.pop(key)
        return d


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = set(data) - set(_FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# helpers


def _potential(cfg: RunConfig) -> PotentialSpec:
    if cfg.table is None:
        return PotentialSpec.coulomb(cfg.nu)
    try:
        tab = np.loadtxt(cfg.table, delimiter="," if cfg.table.endswith(".csv") else None, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read potential table {cfg.table}: {exc}") from None
    if tab.shape[1] != 2:
        raise ConfigError("potential table needs two columns: r, v(r)")
    return PotentialSpec.tabulated(tab[:, 0], tab[:, 1], cfg.nu)


def _radial_mesh(cfg: RunConfig) -> RadialMesh:
    kw = {"r_min": cfg.r_min}
    if cfg.r_max is not None:
        kw["r_max"] = cfg.r_max
    return RadialMesh.for_coupling(cfg.dim, cfg.nu, cfg.n, **kw)


def _momentum_mesh(cfg: RunConfig) -> MomentumMesh:
    if cfg.p_min is not None:
        return MomentumMesh.geometric(cfg.p_min, cfg.p_max, cfg.m)
    return MomentumMesh.for_coupling(cfg.dim, cfg.nu, cfg.m, cfg.p_max)


def _channels(cfg: RunConfig) -> tuple[list[Channel], float | None]:
    if cfg.kappa is not None:
        return [Channel.from_dirac_kappa(cfg.dim, cfg.kappa)], None
    kmax = cfg.kappa_max if cfg.kappa_max is not None else (2.0 if cfg.dim == 3 else 1.5)
    return enumerate_channels(cfg.dim, kmax), kmax


def _solve(cfg: RunConfig, method: str, channels, kmax, k: int):
    pot = _potential(cfg)
    if method == "talman":
        return minimax.talman_eigenvalue(k, channels, pot, _radial_mesh(cfg), tol=cfg.tol,
                                         kappa_max=kmax, threads=cfg.threads)
    return minimax.esteban_sere_eigenvalue(k, channels, pot, _momentum_mesh(cfg), tol=cfg.tol,
                                           kappa_max=kmax, threads=cfg.threads)


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# commands; each returns (records, summary, exit_code)


def cmd_eigenvalues(cfg: RunConfig):
    channels, kmax = _channels(cfg)
    methods = ["talman", "esteban-sere"] if cfg.method == "both" else [cfg.method]
    records = []
    for method in methods:
        res = _solve(cfg, method, channels, kmax, cfg.k)
        for idx in range(cfg.k):
            lam, ch, resid = res.merged[idx]
            level = sorted(ev.lam for ev in res.per_channel[ch]).index(lam) + 1
            analytic = rel = None
            if cfg.table is None:
                analytic = radial.coulomb_level(cfg.nu, ch.kappa, level)
                rel = abs(lam - analytic) / abs(analytic)
            records.append({
                "method": res.method, "dim": cfg.dim, "nu": cfg.nu, "kappa": ch.dirac_kappa,
                "channel": ch.label(), "k": idx + 1, "lambda": _num(lam), "residual": _num(resid),
                "analytic": _num(analytic), "rel_error": _num(rel),
                "certified": None if res.certified_count is None else idx < res.certified_count,
            })
    summary = {"count": len(records)}
    if cfg.method == "both":
        t = [r for r in records if r["method"] == "talman"]
        e = [r for r in records if r["method"] == "esteban-sere"]
        gaps = [abs(a["lambda"] - b["lambda"]) - a["residual"] - b["residual"] for a, b in zip(t, e)]
        summary["max_method_gap"] = max(gaps)
        summary["methods_agree"] = bool(max(gaps) <= 1e-3)
    return records, summary, 0


def cmd_hardy_check(cfg: RunConfig):
    mesh = _radial_mesh(cfg)
    rng = np.random.default_rng(cfg.seed)
    profiles = hardy.random_profiles(rng, cfg.dim, cfg.nu, mesh, cfg.count)
    rep = hardy.verify_corollary(cfg.dim, cfg.nu, profiles, mesh)
    records = [
        {"index": i, "channel": ch, "J": _num(v), "scale": _num(s), "relative": _num(v / s)}
        for i, (ch, v, s) in enumerate(zip(rep.channels, rep.values, rep.scales))
    ]
    summary = {
        "lambda": rep.lam, "min_J": _num(rep.min_J), "min_relative": _num(rep.min_relative),
        "slack": rep.slack, "saturation_residual": _num(rep.saturation_residual),
        "saturation_analytic": _num(rep.saturation_analytic), "notes": rep.notes, "passed": rep.passed,
    }
    return records, summary, 0 if rep.passed else 4


CHAIN_SLACK = 1e-10
KATO_SLACK = 1e-8
SHARPNESS_FLOOR = 0.8


def _random_mesh_vectors(rng, mesh: MomentumMesh, count: int):
    s = np.log(mesh.nodes)
    out = []
    for i in range(count):
        if i % 2:
            out.append(rng.normal(size=mesh.size))
        else:
            width = rng.uniform(0.3, 4.0)
            centre = rng.uniform(s[0], s[-1])
            env = np.exp(-((s - centre) ** 2) / (2 * width**2)) / mesh.nodes
            out.append(env * (1.0 + 0.3 * rng.normal(size=mesh.size)))
    return out


def kernel_suite(seed: int, count: int, jmax: int = 5, mesh: MomentumMesh | None = None):
    """Chain and Kato-bound checks on seeded mesh vectors; one record per inequality."""
    mesh = mesh or MomentumMesh.geometric(1e-4, 1e4, 200)
    rng = np.random.default_rng(seed)
    vecs = _random_mesh_vectors(rng, mesh, count)
    P = kernel.assemble_p_form(mesh)
    orders = [j / 2 for j in range(-1, 2 * jmax + 3)]
    Q = {j: kernel.assemble_coulomb_form(j, mesh) for j in orders}
    qv = {j: np.array([Q[j](v) for v in vecs]) for j in orders}
    pv = np.array([P(v) for v in vecs])
    records = []

    def add(name, lhs, rhs, slack):
        viol = float(np.max((lhs - rhs) / np.abs(rhs))) if len(lhs) else -math.inf
        records.append({"inequality": name, "max_violation": _num(viol), "slack": slack,
                        "passed": bool(viol <= slack), "sharpness": None})

    for j in range(jmax + 1):
        add(f"q_{j + 0.5:g} <= q_{j - 0.5:g}", qv[j + 0.5], qv[j - 0.5], CHAIN_SLACK)
        add(f"q_{j + 1:g} <= q_{j:g}", qv[j + 1.0], qv[float(j)], CHAIN_SLACK)
    wide = MomentumMesh.geometric(1e-6, 1e6, 400)
    Pw = kernel.assemble_p_form(wide)
    trial = kernel.concentrating_trial(wide, 4.0)
    for dim, j, C in kernel.kato_bounds():
        add(f"q_{j:g} <= {C:.12g} p (n={dim})", qv[j], C * pv, KATO_SLACK)
        ratio = kernel.rayleigh_ratio(kernel.assemble_coulomb_form(j, wide), Pw, trial) / C
        records[-1]["sharpness"] = ratio
        records[-1]["passed"] = records[-1]["passed"] and ratio >= SHARPNESS_FLOOR
    return records


def cmd_kernel_check(cfg: RunConfig):
    records = kernel_suite(cfg.seed, cfg.count)
    ok = all(r["passed"] for r in records)
    return records, {"passed": ok}, 0 if ok else 4


CORE_KMAX = 64
CORE_SLACK = 1e-8


def core_suite(dim: int, nu: float, kmax: int = CORE_KMAX):
    """q-values on the approximating core sequence against the analytic bound."""
    labels = [-0.5, 0.5] if dim == 2 else [(a, b) for a in (-0.5, 0.5) for b in (-0.5, 0.5)]
    bound = radial.analytic_core_bound(dim, nu)
    rhs = [radial.core_rhs_value(dim, nu, k) for k in range(1, kmax + 1)]
    cache = {}
    records = []
    for label in labels:
        ch = radial.core_channel(dim, label)
        if ch not in cache:
            cache[ch] = [radial.q_nu_channel(ch, nu, radial.varsigma_profile(dim, nu, label, k))
                         for k in range(1, kmax + 1)]
        for k in range(1, kmax + 1):
            q, r = cache[ch][k - 1], rhs[k - 1]
            records.append({"m": str(label), "channel": ch.label(), "k": k, "q_value": q, "rhs_value": r,
                            "bound": bound, "passed": bool(max(q, r) <= bound + CORE_SLACK)})
    return records, bound


def cmd_core_check(cfg: RunConfig):
    try:
        records, bound = core_suite(cfg.dim, cfg.nu)
    except OutOfCoreBranch as exc:
        raise ConfigError(f"trivial branch: {exc}") from None
    ok = all(r["passed"] for r in records)
    summary = {"bound": bound, "sup_q": max(r["q_value"] for r in records),
               "sup_rhs": max(r["rhs_value"] for r in records), "passed": ok}
    return records, summary, 0 if ok else 4


CERT_SLACK = 1e-8
RELATION_TOL = 1e-10
RATIO_TOL = 1e-12


def certificate_suite(seed: int, count: int, mesh: MomentumMesh | None = None, kappa_max: float = 2.5):
    """Lower-bound certificate and trial-map relation on seeded random inputs for both dimensions."""
    mesh = mesh or MomentumMesh.geometric(1e-6, 1e6, 400)
    rng = np.random.default_rng(seed)
    records = []
    for dim in (2, 3):
        chans = enumerate_channels(dim, kappa_max)
        forms = minimax.CertificateForms.build(mesh, [o for c in chans for o in (c.order, c.partner.order)])
        worst_cert, worst_rel, worst_ratio = math.inf, 0.0, 0.0
        for _ in range(count):
            phi = {}
            for c in chans:
                if rng.random() < 0.3:
                    continue
                shape = kernel.concentrating_trial(mesh, rng.uniform(0.3, 5.0))
                phi[c.index] = rng.normal() * shape * (1.0 + 0.05 * rng.normal(size=mesh.size))
            if not phi:
                phi[chans[0].index] = kernel.concentrating_trial(mesh, 2.0)
            res, scale = minimax.talman_certificate(dim, phi, forms)
            worst_cert = min(worst_cert, res / scale)
            chi = {c.index: rng.normal(size=mesh.size) for c in chans if rng.random() < 0.7}
            rel, ratio = minimax.es_relation_check(dim, chi, mesh.nodes)
            worst_rel, worst_ratio = max(worst_rel, rel), max(worst_ratio, ratio)
        records += [
            {"dim": dim, "check": "talman_certificate", "worst": worst_cert, "tolerance": -CERT_SLACK,
             "passed": bool(worst_cert >= -CERT_SLACK)},
            {"dim": dim, "check": "es_relation", "worst": worst_rel, "tolerance": RELATION_TOL,
             "passed": bool(worst_rel <= RELATION_TOL)},
            {"dim": dim, "check": "es_ratio", "worst": worst_ratio, "tolerance": RATIO_TOL,
             "passed": bool(worst_ratio <= RATIO_TOL)},
        ]
    return records


def cmd_certificate(cfg: RunConfig):
    records = certificate_suite(cfg.seed, cfg.count)
    ok = all(r["passed"] for r in records)
    return records, {"passed": ok}, 0 if ok else 4


def cmd_sweep(cfg: RunConfig):
    records = []
    ground = Channel.from_kappa(cfg.dim, 1.0 / (4 - cfg.dim))
    for nu in cfg.nus:
        row = {"nu": float(nu), "lambda_num": None, "lambda_analytic": None, "rel_error": None,
               "runtime_ms": None, "status": 0, "flag": ""}
        start = time.perf_counter()
        try:
            sub = dataclasses.replace(cfg, nu=float(nu))
            sub.validate("eigenvalues")
            res = _solve(sub, "talman" if cfg.method == "both" else cfg.method, [ground], None, 1)
            lam = res.kth(1)
            row["lambda_num"] = lam
            if cfg.table is None:
                exact = radial.ground_state_energy(cfg.dim, nu)
                row["lambda_analytic"] = exact
                row["rel_error"] = abs(lam - exact) / exact
            if (4 - cfg.dim) * nu >= NEAR_CRITICAL:
                row["flag"] = "near-critical"
            elif row["rel_error"] is not None and row["rel_error"] > SWEEP_TOL:
                row["flag"] = "above-tolerance"
        except DiracGapError as exc:
            row["status"] = exc.exit_code
            row["flag"] = type(exc).__name__
        if cfg.timing:
            row["runtime_ms"] = round(1e3 * (time.perf_counter() - start), 3)
        records.append(row)
    return records, {"rows": len(records)}, 0


HANDLERS = {
    "eigenvalues": cmd_eigenvalues,
    "hardy-check": cmd_hardy_check,
    "kernel-check": cmd_kernel_check,
    "core-check": cmd_core_check,
    "certificate": cmd_certificate,
    "sweep": cmd_sweep,
}

CSV_COLUMNS = {
    "eigenvalues": ["method", "dim", "nu", "kappa", "channel", "k", "lambda", "residual", "analytic",
                    "rel_error", "certified"],
    "hardy-check": ["index", "channel", "J", "scale", "relative"],
    "kernel-check": ["inequality", "max_violation", "slack", "passed", "sharpness"],
    "core-check": ["m", "channel", "k", "q_value", "rhs_value", "bound", "passed"],
    "certificate": ["dim", "check", "worst", "tolerance", "passed"],
    "sweep": ["nu", "lambda_num", "lambda_analytic", "rel_error", "runtime_ms", "status", "flag"],
}


# ---------------------------------------------------------------------------
# output


def _cell(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def render(command: str, cfg: RunConfig, records, summary, exit_code: int) -> str:
    if cfg.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        cols = CSV_COLUMNS[command]
        writer.writerow(cols)
        for rec in records:
            writer.writerow([_cell(rec.get(c)) for c in cols])
        return buf.getvalue()
    doc = {"command": command, "exit_code": exit_code, "config": cfg.public(), "records": records,
           "summary": summary}
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        # prefix matching would read --n as --nu on commands without mesh options
        kwargs.setdefault("allow_abbrev", False)
        super().__init__(*args, **kwargs)

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    text = text.strip()
    return [float(x) for x in text.split(",") if x.strip()] if text else []


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--config", help="JSON file with default settings (flags override it)")
    g.add_argument("--dim", type=int, choices=(2, 3))
    g.add_argument("--nu", type=float, help="Coulomb coupling, or the bound |r v| <= nu for tables")
    g.add_argument("--table", help="two-column file r, v(r) for a tabulated potential")
    g.add_argument("--seed", type=int, help=f"seed for randomized suites (default {DEFAULT_SEED})")
    g.add_argument("--format", choices=("json", "csv"))
    g.add_argument("--output", "-o", help="output file (default stdout)")
    g.add_argument("--threads", type=int, help="worker threads (default $DIRACGAP_THREADS or 1)")
    g.add_argument("--count", type=int, help="number of random test inputs")
    g.add_argument("-v", "--verbose", action="store_true")

    radial_opts = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    r = radial_opts.add_argument_group("radial mesh options")
    r.add_argument("--n", "--N", type=int, dest="n", help="radial mesh nodes")
    r.add_argument("--r-min", type=float, dest="r_min")
    r.add_argument("--r-max", type=float, dest="r_max")

    solver = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    s = solver.add_argument_group("solver options")
    s.add_argument("--method", choices=("talman", "esteban-sere", "both"))
    s.add_argument("--k", type=int, help="number of merged gap eigenvalues")
    s.add_argument("--kappa", type=float, help="restrict to one channel (usual Dirac sign: ground state at -1 in 3D)")
    s.add_argument("--kappa-max", type=float, dest="kappa_max")
    s.add_argument("--tol", type=float)
    s.add_argument("--m", "--M", type=int, dest="m", help="momentum cells")
    s.add_argument("--p-min", type=float, dest="p_min")
    s.add_argument("--p-max", type=float, dest="p_max")

    parser = _Parser(prog="diracgap", description="Gap eigenvalues and inequality checks for Dirac-Coulomb operators.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("eigenvalues", parents=[common, radial_opts, solver], help="gap eigenvalues by either minimax route")
    sub.add_parser("hardy-check", parents=[common, radial_opts], help="Hardy-Dirac inequality on random profiles")
    sub.add_parser("kernel-check", parents=[common], help="Coulomb form ordering and Kato bounds")
    sub.add_parser("core-check", parents=[common], help="boundedness on the approximating core sequence")
    sub.add_parser("certificate", parents=[common], help="trial-map certificates")
    sw = sub.add_parser("sweep", parents=[common, radial_opts, solver], help="ground state versus coupling")
    sw.add_argument("--nus", type=_float_list, help="comma-separated couplings")
    sw.add_argument("--timing", action="store_true", default=None,
                    help="fill runtime_ms (output is then no longer reproducible)")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {k: v for k, v in vars(args).items() if k in _FIELDS}
    cfg = None
    try:
        cfg = load_config(args.config, overrides)
        cfg.validate(args.command)
        records, summary, code = HANDLERS[args.command](cfg)
    except DiracGapError as exc:
        code = exc.exit_code
        print(f"diracgap: {type(exc).__name__}: {exc}", file=sys.stderr)
        if cfg is not None and code != 1:
            _emit(render(args.command, cfg, [], {"error": str(exc), "error_type": type(exc).__name__}, code),
                  cfg.output)
        return code
    _emit(render(args.command, cfg, records, summary, code), cfg.output)
    return code


def entry() -> None:  # pragma: no cover - console script
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
