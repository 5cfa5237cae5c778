"""Convergence-study driver: configuration, execution, and results emission.

A study sweeps a (degree, mesh-level) matrix for one manufactured problem,
solving the space-time system on equal space/time meshes h = 1/level and
recording the four relative errors plus observed rates between halving
levels.  Results land in a fixed-header CSV with a JSON sidecar carrying
the configuration echo and environment metadata.
"""

import argparse
import json
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np
import scipy

from . import problems
from .assembly import AssemblyError, SpaceTimeSpace, assemble_system
from .errors import DiscreteSolution, discrete_infsup_constant, error_norms
from .geometry import geometry_by_name
from .linsolve import BlockSystem, SolverError, solve

__all__ = [
    "StudyConfig",
    "StudyResult",
    "CellResult",
    "ConfigError",
    "parse_config",
    "run_study",
    "emit_results",
    "rate_windows",
    "main",
]

CSV_HEADER = (
    "problem,p,h,dof,E_u1,E_u2,E_v1,E_v2,"
    "rate_u1,rate_u2,rate_v1,rate_v2,iters,residual,seconds"
)

_INFSUP_LIMIT = 400


class ConfigError(Exception):
    """Invalid configuration value or unknown key."""


@dataclass
class StudyConfig:
    problem: str = "example1"
    degrees: tuple = (1, 2, 3, 4)
    levels: tuple = (4, 8, 16, 32, 64)
    tol: float = 1e-10
    max_iter: int | None = None
    quad_points: int | None = None
    out: str = "results.csv"
    check_rates: bool = False
    infsup: bool = False
    dump_matrices: str | None = None
    max_dof: int = 2_000_000


@dataclass
class CellResult:
    problem: str
    p: int
    level: int
    h: float
    dof: int
    ok: bool
    reason: str | None
    report: object
    iters: int
    residual: float
    seconds: float
    infsup_constant: float | None
    rates: dict


@dataclass
class StudyResult:
    config: StudyConfig
    cells: list

    @property
    def all_ok(self):
        return all(c.ok for c in self.cells)

    def cells_for(self, degree):
        return [c for c in self.cells if c.p == degree]

    def finest_pair_rates(self, degree):
        """Rates of the last halving pair of successful cells at this degree."""
        ok_cells = [c for c in self.cells_for(degree) if c.ok]
        for cell in reversed(ok_cells):
            if any(r is not None for r in cell.rates.values()):
                return cell.rates
        return None


def rate_windows(degree):
    """Acceptance windows for the finest-pair observed rates."""
    return {
        "e_u1": (degree - 0.25, degree + 0.35),
        "e_v1": (degree - 0.25, degree + 0.35),
        "e_u2": (degree + 1 - 0.3, degree + 1 + 0.3),
        "e_v2": (degree + 1 - 0.3, degree + 1 + 0.3),
    }


# ----------------------------------------------------------------------
# configuration parsing

_LIST_KEYS = {"degrees", "levels"}
_INT_KEYS = {"max_iter", "quad_points", "max_dof"}
_FLOAT_KEYS = {"tol"}
_BOOL_KEYS = {"check_rates", "infsup"}
_STR_KEYS = {"problem", "out", "dump_matrices"}
_ALL_KEYS = _LIST_KEYS | _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS
_KEY_ALIASES = {"quadrature_points": "quad_points"}


def _parse_value(key, raw):
    raw = raw.strip()
    try:
        if key in _LIST_KEYS:
            return tuple(int(tok) for tok in raw.split(",") if tok.strip())
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            lowered = raw.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError(f"invalid value {raw!r} for config key {key!r}") from None


def _read_config_file(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, raw = line.split("=", 1)
            key = key.strip().replace("-", "_")
            key = _KEY_ALIASES.get(key, key)
            if key not in _ALL_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def _validate(config):
    try:
        problems.by_name(config.problem)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not config.degrees:
        raise ConfigError("degrees must not be empty")
    for p in config.degrees:
        if p < 1:
            raise ConfigError(f"invalid degree {p}: spline degree must be >= 1")
    if not config.levels:
        raise ConfigError("levels must not be empty")
    for lvl in config.levels:
        if lvl < 1:
            raise ConfigError(f"invalid mesh level {lvl}: need >= 1 element")
    if config.tol <= 0.0:
        raise ConfigError(f"tol must be positive, got {config.tol}")
    if config.quad_points is not None and not 1 <= config.quad_points <= 16:
        raise ConfigError(f"quad_points must be in [1, 16], got {config.quad_points}")
    if config.max_iter is not None and config.max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {config.max_iter}")
    if config.max_dof < 1:
        raise ConfigError(f"max_dof must be >= 1, got {config.max_dof}")
    return config


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="stiga",
        description="Space-time spline Galerkin convergence studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    study = sub.add_parser("study", help="run a convergence study")
    study.add_argument("--config", default=None, help="key=value config file")
    study.add_argument("--problem", default=None)
    study.add_argument("--degrees", default=None, help="comma list, e.g. 1,2,3,4")
    study.add_argument("--levels", default=None, help="comma list of elements per direction")
    study.add_argument("--tol", default=None)
    study.add_argument("--max-iter", dest="max_iter", default=None)
    study.add_argument("--quad-points", dest="quad_points", default=None)
    study.add_argument("--out", default=None)
    study.add_argument("--check-rates", dest="check_rates", action="store_true", default=None)
    study.add_argument("--infsup", action="store_true", default=None)
    study.add_argument("--dump-matrices", dest="dump_matrices", default=None)
    study.add_argument("--max-dof", dest="max_dof", default=None)
    return parser


def parse_config(source=None):
    """Build a validated StudyConfig from CLI flags or a config file path.

    `source` may be an argv list (e.g. ["study", "--problem", "example1"]),
    a path to a key=value config file, or None for full defaults.
    Flags override file values; unknown keys are rejected.
    """
    values = {}
    if isinstance(source, (str, os.PathLike)):
        values.update(_read_config_file(source))
    else:
        argv = list(source) if source is not None else ["study"]
        args = _build_parser().parse_args(argv)
        if args.config is not None:
            values.update(_read_config_file(args.config))
        for key in _ALL_KEYS:
            raw = getattr(args, key, None)
            if raw is None:
                continue
            values[key] = raw if isinstance(raw, (bool, tuple)) else _parse_value(key, str(raw))
    config = StudyConfig(**values)
    return _validate(config)


# ----------------------------------------------------------------------
# study execution

def _halving_rate(prev_cell, cell):
    rates = dict.fromkeys(("e_u1", "e_u2", "e_v1", "e_v2"))
    if prev_cell is None or not (prev_cell.ok and cell.ok):
        return rates
    if abs(prev_cell.h / cell.h - 2.0) > 1e-9:
        return rates
    for name in rates:
        a = getattr(prev_cell.report, name)
        b = getattr(cell.report, name)
        if a > 0.0 and b > 0.0:
            rates[name] = float(np.log2(a / b))
    return rates


def _dump_cell_matrices(config, system, p, level):
    os.makedirs(config.dump_matrices, exist_ok=True)
    stem = f"{config.problem}_p{p}_h{level}"
    for name, mat in (("Wt", system.W_t), ("Mt", system.M_t),
                      ("Ks", system.K_s), ("Ms", system.M_s)):
        mat.write_coordinate_file(os.path.join(config.dump_matrices, f"{stem}_{name}.txt"))


def _run_cell(config, problem, p, level):
    start = time.perf_counter()
    h = 1.0 / level
    n_s = (level + p - 2) ** 2
    n_t = level + p - 1
    dof = 2 * n_s * n_t

    def failed(reason):
        return CellResult(
            problem=config.problem, p=p, level=level, h=h, dof=dof, ok=False,
            reason=reason, report=None, iters=-1, residual=float("nan"),
            seconds=time.perf_counter() - start, infsup_constant=None,
            rates=dict.fromkeys(("e_u1", "e_u2", "e_v1", "e_v2")),
        )

    if dof > config.max_dof:
        return failed(f"refused: dof={dof} exceeds max_dof={config.max_dof}")

    try:
        geometry = geometry_by_name(problem.geometry_name)
        space = SpaceTimeSpace.uniform(geometry, level, p, problem.final_time)
        assembled = assemble_system(space, problem.forcing, config.quad_points)
        if config.dump_matrices:
            _dump_cell_matrices(config, assembled, p, level)
        system = BlockSystem(assembled.W, assembled.K, assembled.M, assembled.load)
        kwargs = {"tol": config.tol}
        if config.max_iter is not None:
            kwargs["max_iter"] = config.max_iter
        u, v, solve_report = solve(system, **kwargs)
        sol = DiscreteSolution(u, v, space)
        report = error_norms(sol, problem)
        constant = None
        if config.infsup and space.N <= _INFSUP_LIMIT:
            constant = discrete_infsup_constant(space)
    except (SolverError, AssemblyError, ValueError, np.linalg.LinAlgError) as exc:
        return failed(str(exc))

    return CellResult(
        problem=config.problem, p=p, level=level, h=h, dof=2 * space.N, ok=True,
        reason=None, report=report, iters=solve_report.iterations,
        residual=solve_report.relative_residual,
        seconds=time.perf_counter() - start, infsup_constant=constant,
        rates=dict.fromkeys(("e_u1", "e_u2", "e_v1", "e_v2")),
    )


def run_study(config, progress=None):
    """Run every (degree, level) cell; failures are recorded, not fatal."""
    problem = problems.by_name(config.problem)
    cells = []
    for p in config.degrees:
        prev = None
        for level in config.levels:
            cell = _run_cell(config, problem, p, level)
            cell.rates = _halving_rate(prev, cell)
            cells.append(cell)
            prev = cell
            if progress is not None:
                progress(cell)
    return StudyResult(config=config, cells=cells)


# ----------------------------------------------------------------------
# results emission

def _fmt(x):
    return f"{x:.16e}"


def _fmt_rate(x):
    return "" if x is None else f"{x:.16e}"


def emit_results(result, path):
    """Write the CSV table and a JSON sidecar with config and environment."""
    lines = [CSV_HEADER]
    for c in result.cells:
        if c.ok:
            err = [
                _fmt(c.report.e_u1), _fmt(c.report.e_u2),
                _fmt(c.report.e_v1), _fmt(c.report.e_v2),
            ]
        else:
            err = ["nan"] * 4
        row = [
            c.problem, str(c.p), _fmt(c.h), str(c.dof), *err,
            _fmt_rate(c.rates["e_u1"]), _fmt_rate(c.rates["e_u2"]),
            _fmt_rate(c.rates["e_v1"]), _fmt_rate(c.rates["e_v2"]),
            str(c.iters), _fmt(c.residual), _fmt(c.seconds),
        ]
        lines.append(",".join(row))
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc

    sidecar = {
        "config": asdict(result.config),
        "environment": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "platform": platform.platform(),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        },
        "failures": [
            {"p": c.p, "level": c.level, "reason": c.reason}
            for c in result.cells if not c.ok
        ],
        "infsup_constants": [
            {"p": c.p, "level": c.level, "constant": c.infsup_constant}
            for c in result.cells if c.infsup_constant is not None
        ],
    }
    with open(f"{path}.meta.json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def check_rate_windows(result):
    """True when every degree's finest-pair rates land in the acceptance windows."""
    all_ok = True
    for p in result.config.degrees:
        rates = result.finest_pair_rates(p)
        if rates is None:
            all_ok = False
            continue
        windows = rate_windows(p)
        for name, rate in rates.items():
            lo, hi = windows[name]
            if rate is None or not lo <= rate <= hi:
                all_ok = False
    return all_ok


def main(argv=None):
    try:
        config = parse_config(argv if argv is not None else sys.argv[1:])
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)

    def progress(cell):
        if cell.ok:
            print(
                f"[{cell.problem} p={cell.p} h=1/{cell.level}] "
                f"E_u1={cell.report.e_u1:.3e} E_u2={cell.report.e_u2:.3e} "
                f"E_v1={cell.report.e_v1:.3e} E_v2={cell.report.e_v2:.3e} "
                f"iters={cell.iters} res={cell.residual:.2e} "
                f"({cell.seconds:.2f}s)",
                flush=True,
            )
        else:
            print(f"[{cell.problem} p={cell.p} h=1/{cell.level}] FAILED: {cell.reason}",
                  flush=True)

    result = run_study(config, progress=progress)
    emit_results(result, config.out)
    print(f"results written to {config.out}")

    code = 0 if result.all_ok else 1
    if config.check_rates:
        if check_rate_windows(result):
            print("rate check: all finest-pair rates inside acceptance windows")
        else:
            print("rate check: FAILED")
            code = 1
    return code


if __name__ == "__main__":
    sys.exit(main())
