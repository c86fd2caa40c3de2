"""Experiment runner and command line entry point.

Config files are plain ``key = value`` lines; ``#`` starts a comment.
The keys ``n_sub``, ``coarse_refines``, ``fine_refines``, ``alpha`` and
``theta`` accept comma-separated lists, and the experiment is run on
their Cartesian product.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import math
import sys
import time
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .auxspace import AuxiliarySpacePreconditioner
from .dgcore import FormSpec, assemble_bilinear, assemble_load, interpolate, l2_error
from .krylov import ConvergenceError, lanczos_condition, pcg_solve
from .mesh import build_hierarchy, build_unit_square_mesh, write_mesh
from .schwarz import AdditiveSchwarz
from .splitting import IP0Preconditioner, algorithm1_solve, build_basis_transform, split_blocks

EXPERIMENTS = ("splitting", "schwarz1", "schwarz2", "aux", "convergence", "equivalence")
SWEEP_KEYS = ("n_sub", "coarse_refines", "fine_refines", "alpha", "theta")
EXIT_CONFIG, EXIT_SOLVER = 2, 3


class ConfigError(ValueError):
    pass


def exact_solution(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def load_function(x, y):
    return 2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    n_sub: tuple = (1,)
    coarse_refines: tuple = (0,)
    fine_refines: tuple = (2,)
    alpha: tuple = (10.0,)
    theta: tuple = (1,)
    mode: str = "exact"
    tol: float = 1e-8
    maxit: int = 0
    seed: int = 0
    smoother_scale: float = 1.0
    timing: bool = False
    output: str = "report.csv"

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; "
                              f"expected one of {', '.join(EXPERIMENTS)}")
        for key in SWEEP_KEYS:
            if not getattr(self, key):
                raise ConfigError(f"{key} needs at least one value")
        if any(v < 1 for v in self.n_sub):
            raise ConfigError("n_sub must be >= 1")
        if any(v < 0 for v in self.coarse_refines + self.fine_refines):
            raise ConfigError("refinement counts must be >= 0")
        if any(not (math.isfinite(a) and a > 0) for a in self.alpha):
            raise ConfigError("alpha must be positive and finite")
        if any(t not in (-1, 0, 1) for t in self.theta):
            raise ConfigError("theta must be one of -1, 0, 1")
        if self.experiment != "convergence" and self.theta != (1,):
            raise ConfigError("only the convergence experiment accepts theta != 1")
        if self.mode not in ("exact", "inexact"):
            raise ConfigError(f"mode must be exact or inexact, got {self.mode!r}")
        if not 0 < self.tol < 1:
            raise ConfigError("tol must lie in (0, 1)")
        if self.maxit < 0 or self.seed < 0:
            raise ConfigError("maxit and seed must be >= 0")
        if not (math.isfinite(self.smoother_scale) and self.smoother_scale > 0):
            raise ConfigError("smoother_scale must be positive")
        if not self.output:
            raise ConfigError("output path is empty")

    def cases(self):
        return itertools.product(*(getattr(self, k) for k in SWEEP_KEYS))


def _as_int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _as_float(key, text):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite")
    return value


def _as_bool(key, text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


_PARSERS = {
    "n_sub": _as_int, "coarse_refines": _as_int, "fine_refines": _as_int,
    "alpha": _as_float, "theta": _as_int, "tol": _as_float, "maxit": _as_int,
    "seed": _as_int, "smoother_scale": _as_float, "timing": _as_bool,
    "experiment": lambda k, v: v, "mode": lambda k, v: v, "output": lambda k, v: v,
}


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key in SWEEP_KEYS:
            items = [s.strip() for s in value.split(",")]
            if any(not s for s in items):
                raise ConfigError(f"line {lineno}: empty entry in {key}")
            values[key] = tuple(_PARSERS[key](key, s) for s in items)
        else:
            values[key] = _PARSERS[key](key, value)
    if "experiment" not in values:
        raise ConfigError("missing required key 'experiment'")
    return ExperimentConfig(**values)


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


@dataclass
class ReportRow:
    experiment: str
    n: int
    h: float
    H: float
    N: int
    alpha: float
    theta: int
    solver: str
    iterations: int
    lambda_min: float
    lambda_max: float
    kappa: float
    final_residual: float
    l2_error: float
    energy_error: float
    runtime_ms: float = 0.0
    converged: bool = field(default=True, compare=False, repr=False)


COLUMNS = tuple(f.name for f in fields(ReportRow) if f.name != "converged")


def _format(value):
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def write_report(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(COLUMNS)
        for row in rows:
            out.writerow(_format(v) for v in astuple(row)[:len(COLUMNS)])


def read_report(path):
    kinds = {f.name: f.type for f in fields(ReportRow)}
    cast = {"int": int, "float": float, "str": str}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != COLUMNS:
            raise ValueError(f"unexpected report header {header}")
        return [ReportRow(**{k: cast[kinds[k]](v) for k, v in zip(header, line)})
                for line in reader]


# ----------------------------------------------------------------------
# experiments


def _errors(mesh, A, u):
    diff = interpolate(mesh, exact_solution) - u
    return l2_error(mesh, u, exact_solution), float(np.sqrt(max(diff @ (A @ diff), 0.0)))


def _pcg(A, B, b, cfg):
    maxit = cfg.maxit or None
    return pcg_solve(A, B, b, tol=cfg.tol, maxit=maxit)


def _run_case(cfg, n_sub, coarse_refines, fine_refines, alpha, theta):
    hier = build_hierarchy(n_sub, coarse_refines, fine_refines)
    mesh = hier.fine_mesh
    n = n_sub * 2 ** (coarse_refines + fine_refines)
    spec = FormSpec(alpha=alpha, theta=theta)
    b = assemble_load(mesh, load_function)
    A = assemble_bilinear(mesh, spec, "IP")
    exp = cfg.experiment
    lam = None
    if exp == "splitting":
        A = assemble_bilinear(mesh, spec, "IP0")
        blocks = split_blocks(A, build_basis_transform(mesh))
        u, info = algorithm1_solve(blocks, b, inner_tol=cfg.tol)
        zstats, crstats = info["z"][0], info["cr"][0]
        res = float(np.linalg.norm(b - A @ u) / np.linalg.norm(b))
        solver, its = "algorithm1", zstats.iterations + crstats.iterations
        lam = (zstats.lambda_min, zstats.lambda_max)
        converged = True
    elif exp == "convergence" and theta != 1:
        u = spla.spsolve(A.tocsc(), b)
        res = float(np.linalg.norm(b - A @ u) / np.linalg.norm(b))
        solver, its, lam, converged = "direct", 0, (1.0, 1.0), True
    else:
        if exp in ("schwarz1", "schwarz2"):
            level = "one" if exp == "schwarz1" else "two"
            B = AdditiveSchwarz(hier, A, spec, level=level, mode=cfg.mode)
            solver = f"schwarz-{level}-{cfg.mode}"
        elif exp == "aux":
            B = AuxiliarySpacePreconditioner(mesh, A, cfg.smoother_scale)
            solver = "aux"
        else:
            A0 = assemble_bilinear(mesh, spec, "IP0")
            B = IP0Preconditioner(A0, build_basis_transform(mesh))
            solver = "ip0"
        u, stats = _pcg(A, B, b, cfg)
        its, res, converged = stats.iterations, stats.final_residual, stats.converged
        lam = (stats.lambda_min, stats.lambda_max)
        if exp == "equivalence":
            est = lanczos_condition(A, B, seed=cfg.seed)
            lam = (est.lambda_min, est.lambda_max)
    l2, energy = _errors(mesh, A, u)
    return ReportRow(exp, n, float(mesh.h), float(hier.H), hier.n_subdomains, float(alpha),
                     int(theta), solver, int(its), float(lam[0]), float(lam[1]),
                     float(lam[1] / lam[0]), float(res), float(l2), float(energy),
                     converged=converged)


def run_experiment(cfg):
    """Rows for every case of the sweep, in config order."""
    rows = []
    for case in cfg.cases():
        start = time.perf_counter()
        try:
            row = _run_case(cfg, *case)
        except ConvergenceError as exc:
            n_sub, cr, fr, alpha, theta = case
            hier = build_hierarchy(n_sub, cr, fr)
            row = ReportRow(cfg.experiment, n_sub * 2 ** (cr + fr), float(hier.h),
                            float(hier.H), hier.n_subdomains, float(alpha), int(theta),
                            "failed", 0, 1.0, 1.0, 1.0, float(exc.residual), 0.0, 0.0,
                            converged=False)
        if cfg.timing:
            row.runtime_ms = 1000.0 * (time.perf_counter() - start)
        rows.append(row)
    return rows


# ----------------------------------------------------------------------
# entry point


def _cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rows = run_experiment(cfg)
    try:
        write_report(rows, cfg.output)
    except OSError as exc:
        print(f"cannot write report: {exc}", file=sys.stderr)
        return 1
    failed = [r for r in rows if not r.converged]
    for r in failed:
        print(f"solver failure: n={r.n} N={r.N} alpha={r.alpha:g} "
              f"residual={r.final_residual:.3e}", file=sys.stderr)
    print(f"wrote {len(rows)} rows to {cfg.output}")
    return EXIT_SOLVER if failed else 0


def _cmd_mesh(args):
    if args.n < 1:
        print("config error: --n must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        write_mesh(build_unit_square_mesh(args.n), args.out)
    except OSError as exc:
        print(f"cannot write mesh: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="dgdecomp",
                                     description="DG domain decomposition experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.set_defaults(func=_cmd_run)
    mesh = sub.add_parser("mesh", help="write a uniform unit-square mesh")
    mesh.add_argument("--n", type=int, required=True)
    mesh.add_argument("--out", required=True)
    mesh.set_defaults(func=_cmd_mesh)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
