"""Command-line interface: ``triquad <command> --config PATH [overrides]``.

Commands: constants, validate, solve-local, solve-global, solve-pathdep,
solve-delay, benchmark.  Every command writes a result document (JSON by
default) with a ``payload`` section that is bit-reproducible for a fixed
config and seed and a separate ``timing`` section.  Failures print a JSON
error report on stderr.

Exit codes: 0 success, 2 assumption/hypothesis failure, 3 non-convergence,
bound breach or numerical failure, 4 configuration or usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time

import numpy as np

from . import benchmarks
from .config import RunConfig, load_config
from .constants import compute_constants
from .errors import BoundBreachError, ConfigError, HypothesisError, ProviderError, SpecError, TriquadError
from .fixedpoint import batch_standard_error, run_picard
from .global_solver import check_delay_hypotheses, check_global_hypotheses, plan_global, solve_global_on_bundle
from .grid_paths import make_grid, simulate_brownian
from .model import validate_assumptions
from .pathdep import solve_delay, solve_pathdep_local, validate_functional
from .regress import BasisSpec

logger = logging.getLogger(__name__)

__all__ = ["EXIT_OK", "EXIT_HYPOTHESIS", "EXIT_NUMERIC", "EXIT_CONFIG", "COMMANDS", "exit_code_for",
           "execute", "run_command", "main"]

EXIT_OK = 0
EXIT_HYPOTHESIS = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4

COMMANDS = ("constants", "validate", "solve-local", "solve-global", "solve-pathdep", "solve-delay", "benchmark")


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors become configuration errors (exit 4)."""

    def error(self, message):
        raise ConfigError([("argv", message)])


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, ProviderError, SpecError)):
        return EXIT_CONFIG
    if isinstance(exc, HypothesisError):
        return EXIT_HYPOTHESIS
    return EXIT_NUMERIC


def _jsonable(obj):
    """Plain JSON tree: numpy scalars/arrays converted, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    return str(obj)


# ---------------------------------------------------------------- helpers

def _basis(cfg: RunConfig) -> BasisSpec:
    return BasisSpec(cfg.numerics.degree, cfg.numerics.ridge)


def _bundle(cfg: RunConfig, steps: int):
    num = cfg.numerics
    return simulate_brownian(make_grid(cfg.problem.horizon, steps), num.paths, cfg.problem.d, num.seed, num.workers)


def _require_assumptions(cfg: RunConfig) -> dict:
    rep = validate_assumptions(cfg.problem, cfg.numerics.probes, cfg.numerics.seed)
    if not rep.passed:
        failed = [c.assumption_id for c in rep.checks if not c.passed]
        raise HypothesisError(f"assumptions {failed} fail", rep.to_dict())
    return rep.to_dict()


def _y0_summary(Y, bundle, solve_y0, batches: int, diagnostics=()):
    """Y0 means with batch-means errors (or pathwise errors when batching is off or impossible)."""
    y0 = Y[:, 0].mean(axis=0)
    if batches >= 2 and bundle.M >= 2 * batches:
        se = batch_standard_error(solve_y0, bundle, batches)
        method = f"batch means over {batches} disjoint path blocks"
    else:
        se = np.array([dg.get("y0_stderr", 0.0) for dg in diagnostics]) if diagnostics else np.zeros_like(y0)
        method = "pathwise"
    return {"Y0": y0, "Y0_stderr": se, "stderr_method": method}


def _check_local_bounds(report) -> dict:
    bc = dict(report.bound_checks)
    if bc and not (bc["Y_sup_le_A"] and bc["Z_bmo_sq_le_B_sq"]):
        raise BoundBreachError(
            f"a-priori bound breached: Y_sup={bc['Y_sup']:.6g} (A={bc['A']:.6g}), "
            f"BMO^2={bc['Z_bmo_sq']:.6g} (B^2={bc['B_sq']:.6g}), tolerance {bc['tolerance']}",
            report={"bound_checks": bc})
    return bc


# ---------------------------------------------------------------- commands

def _cmd_constants(cfg: RunConfig, args) -> dict:
    rep = compute_constants(cfg.problem, cfg.providers.build())
    return {"constants": rep.to_dict()}


def _cmd_validate(cfg: RunConfig, args) -> dict:
    """All verdicts are reported; any failing check makes the command exit 2."""
    spec, num = cfg.problem, cfg.numerics
    assumptions = validate_assumptions(spec, num.probes, num.seed)
    payload = {"assumptions": assumptions.to_dict(), "passed": assumptions.passed}
    failures = [c.assumption_id for c in assumptions.checks if not c.passed]
    if cfg.functionals:
        reps = [validate_functional(G, probes=num.probes, seed=num.seed, n=spec.n) for G in cfg.functionals]
        payload["functionals"] = [r.to_dict() for r in reps]
        failures += [f"functional[{j}].{c.assumption_id}" for j, r in enumerate(reps) for c in r.checks
                     if not c.passed]
    # Informational: needed only by solve-global.
    payload["global_hypotheses"] = check_global_hypotheses(spec, num.probes, num.seed).to_dict()
    if cfg.delay is not None:
        providers = cfg.providers.build()
        cons = compute_constants(spec, providers)
        eps = float(cfg.delay["epsilon"])
        ok = math.log(eps) <= cons.log_epsilon0
        hyp = check_delay_hypotheses(spec, num.probes, num.seed)
        payload["delay"] = {"epsilon": eps, "epsilon0": cons.epsilon0, "log_epsilon0": cons.log_epsilon0,
                            "epsilon_ok": ok, "tolerance": "log epsilon <= log epsilon0",
                            "hypotheses": hyp.to_dict()}
        if not ok:
            failures.append("delay.epsilon")
        if not hyp.passed:
            failures += [f"delay: {v}" for v in hyp.violations]
    payload["passed"] = not failures
    payload["failures"] = failures
    if failures:
        raise HypothesisError("validation failed: " + "; ".join(failures), payload)
    return payload


def _cmd_solve_local(cfg: RunConfig, args) -> dict:
    spec, num = cfg.problem, cfg.numerics
    assumptions = _require_assumptions(cfg)
    providers = cfg.providers.build()
    basis = _basis(cfg)
    bundle = _bundle(cfg, num.steps)

    def solve(b, check=True):
        return run_picard(spec, b, basis, num.tol, num.max_iter, num.backend, providers, check_bounds=check)

    pair, rep = solve(bundle)
    summary = _y0_summary(pair.Y, bundle, lambda b: solve(b, False)[0].Y[:, 0].mean(axis=0), num.batches,
                          pair.diagnostics)
    bounds = _check_local_bounds(rep)
    return {**summary, "assumptions": assumptions, "constants": compute_constants(spec, providers).to_dict(),
            "fixed_point": rep.to_dict(), "bound_checks": bounds}


def _cmd_solve_global(cfg: RunConfig, args) -> dict:
    spec, num = cfg.problem, cfg.numerics
    assumptions = _require_assumptions(cfg)
    hyp = check_global_hypotheses(spec, num.probes, num.seed)
    if not hyp.passed:
        raise HypothesisError("global hypotheses violated: " + "; ".join(hyp.violations), hyp.to_dict())
    providers = cfg.providers.build()
    basis = _basis(cfg)
    plan = plan_global(spec, providers)
    bundle = _bundle(cfg, plan.K * num.steps)

    def solve(b, check=True):
        return solve_global_on_bundle(spec, b, plan, num.steps, basis, num.tol, num.max_iter, providers,
                                      num.backend, check=check)

    pair, rep = solve(bundle)
    rep["hypotheses"] = hyp.to_dict()
    summary = _y0_summary(pair.Y, bundle, lambda b: solve(b, False)[0].Y[:, 0].mean(axis=0), num.batches)
    return {**summary, "assumptions": assumptions, "constants": compute_constants(spec, providers).to_dict(),
            "global": rep,
            "bound_checks": {"beta_margins": [e["beta_margin"] for e in rep["intervals"]],
                             "beta_tolerance": "3 standard errors per interval",
                             "bmo_sq": rep["bmo_sq"], "bmo_bound": rep["bmo_bound"],
                             "bmo_tolerance": rep["bmo_tolerance"], "bmo_ok": rep["bmo_ok"]}}


def _cmd_solve_pathdep(cfg: RunConfig, args) -> dict:
    if not cfg.functionals:
        raise ConfigError([("problem.functionals", "solve-pathdep needs one functional per component")])
    spec, num = cfg.problem, cfg.numerics
    assumptions = _require_assumptions(cfg)
    providers = cfg.providers.build()
    basis = _basis(cfg)
    bundle = _bundle(cfg, num.steps)
    fs = list(cfg.functionals)

    def solve(b, validate=True):
        return solve_pathdep_local(spec, fs, b, basis, num.tol, num.max_iter, num.backend, providers, validate)

    pair, rep = solve(bundle)
    summary = _y0_summary(pair.Y, bundle, lambda b: solve(b, False)[0].Y[:, 0].mean(axis=0), num.batches,
                          pair.diagnostics)
    bounds = _check_local_bounds(rep)
    return {**summary, "assumptions": assumptions, "functionals": [f.to_dict() for f in fs],
            "fixed_point": rep.to_dict(), "bound_checks": bounds}


def _cmd_solve_delay(cfg: RunConfig, args) -> dict:
    if cfg.delay is None:
        raise ConfigError([("problem.delay", "solve-delay needs a delay section with kind and epsilon")])
    spec, num = cfg.problem, cfg.numerics
    assumptions = _require_assumptions(cfg)
    providers = cfg.providers.build()
    basis = _basis(cfg)
    kind, eps = cfg.delay["kind"], float(cfg.delay["epsilon"])

    def solve(b=None):
        return solve_delay(spec, kind, eps, num.paths, num.steps, num.seed, basis, num.outer_tol,
                           num.outer_max_iter, num.tol, num.max_iter, providers, num.backend, num.workers,
                           bundle=b)

    pair, outer = solve()
    bundle = pair.bundle
    summary = _y0_summary(pair.Y, bundle, lambda b: solve(b)[0].Y[:, 0].mean(axis=0), num.batches)
    g = outer.global_report
    return {**summary, "assumptions": assumptions, "constants": compute_constants(spec, providers).to_dict(),
            "outer": outer.to_dict() | {"global": g},
            "bound_checks": {"beta_margins": [e["beta_margin"] for e in g["intervals"]],
                             "beta_tolerance": "3 standard errors per interval",
                             "bmo_sq": g["bmo_sq"], "bmo_bound": g["bmo_bound"],
                             "bmo_tolerance": g["bmo_tolerance"], "bmo_ok": g["bmo_ok"],
                             "outer_tolerance": outer.tolerance}}


def _cmd_benchmark(cfg: RunConfig, args) -> dict:
    num = cfg.numerics
    backends = tuple(args.backends.split(",")) if args.backends else ("colehopf", "euler")
    for b in backends:
        if b not in ("colehopf", "euler"):
            raise ConfigError([("argv", f"unknown backend {b!r}")])
    rows = benchmarks.run_suite(args.suite, num.paths, num.steps, num.seed, _basis(cfg), backends,
                                cfg.providers.build(), num.workers, args.doublings)
    return {"suite": args.suite, "rows": rows}


_HANDLERS = {
    "constants": _cmd_constants,
    "validate": _cmd_validate,
    "solve-local": _cmd_solve_local,
    "solve-global": _cmd_solve_global,
    "solve-pathdep": _cmd_solve_pathdep,
    "solve-delay": _cmd_solve_delay,
    "benchmark": _cmd_benchmark,
}


# ---------------------------------------------------------------- rendering

def _flatten(tree, prefix=""):
    if isinstance(tree, dict):
        for k, v in tree.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(tree, list) and tree and any(isinstance(v, (dict, list)) for v in tree):
        for j, v in enumerate(tree):
            yield from _flatten(v, f"{prefix}[{j}]")
    else:
        yield prefix, tree


def _scalar_text(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, list):
        return "[" + ", ".join(_scalar_text(x) for x in v) + "]"
    return "" if v is None else str(v)


def render(result: dict, fmt: str, command: str, rows=None) -> str:
    """Render a result document as json, csv or text."""
    if fmt == "json":
        return json.dumps(result, indent=2, sort_keys=True) + "\n"
    if command == "benchmark" and fmt == "csv":
        return benchmarks.rows_to_csv(rows)
    pairs = list(_flatten(result["payload"]))
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("key", "value"))
        for k, v in pairs:
            writer.writerow((k, _scalar_text(v)))
        return buf.getvalue()
    width = max((len(k) for k, _ in pairs), default=0)
    return "".join(f"{k.ljust(width)}  {_scalar_text(v)}\n" for k, v in pairs)


# ---------------------------------------------------------------- entry points

def _build_parser() -> _Parser:
    parser = _Parser(prog="triquad", description="Solvers for triangularly quadratic BSDE systems.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run {name}")
        p.add_argument("--config", required=name != "benchmark", help="YAML run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("json", "csv", "text"))
        p.add_argument("--workers", type=int)
        if name == "benchmark":
            p.add_argument("--suite", required=True, choices=benchmarks.SUITES)
            p.add_argument("--backends", help="comma-separated subset of colehopf,euler")
            p.add_argument("--doublings", type=int, default=3, help="rows beyond the first in the convergence suite")
    return parser


_BENCHMARK_DEFAULT = """
problem: {n: 1, d: 1, horizon: 0.25, lipschitz_C: 0.0, terminal: [{kind: constant, value: 0.0}]}
numerics: {paths: 1000, steps: 10}
"""


def _load(args) -> RunConfig:
    if args.config is None:
        from .config import parse_config

        cfg = parse_config(_BENCHMARK_DEFAULT)
    else:
        cfg = load_config(args.config)
    return cfg.with_overrides(args.seed, args.paths, args.steps, args.out, args.format, args.workers)


def execute(cfg: RunConfig, command: str, args=None) -> tuple[dict, int]:
    """Run ``command`` on an already parsed config.

    Returns ``(result, exit_code)`` where ``result`` holds ``payload`` and
    ``timing``, or ``error`` when the command failed.  Never raises library
    errors.
    """
    if command not in _HANDLERS:
        return {"error": {"type": "ConfigError", "message": f"unknown command {command!r}"}}, EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        payload = _HANDLERS[command](cfg, args)
        code = EXIT_OK
    except Exception as exc:  # every failure maps to one exit code
        code = exit_code_for(exc)
        if not isinstance(exc, TriquadError):
            logger.exception("unexpected failure in %s", command)
        details = getattr(exc, "report", None)
        if isinstance(exc, ConfigError):
            details = [{"path": p, "message": m} for p, m in exc.errors]
        err = {"type": type(exc).__name__, "message": str(exc), "exit_code": code, "details": details}
        if getattr(exc, "interval", None) is not None:
            err["interval"] = exc.interval
        return _jsonable({"command": command, "error": err}), code
    wall = time.perf_counter() - t0
    timing = {"wall_seconds": wall}
    if command == "benchmark":
        timing["rows"] = [row.pop("wall_time") for row in payload["rows"]]
    return _jsonable({"command": command, "payload": payload, "timing": timing}), code


def run_command(argv) -> int:
    try:
        args = _build_parser().parse_args(argv)
        cfg = _load(args)
    except ConfigError as exc:
        report = {"error": {"type": "ConfigError", "message": str(exc), "exit_code": EXIT_CONFIG,
                            "details": [{"path": p, "message": m} for p, m in exc.errors]}}
        print(json.dumps(report, indent=2), file=sys.stderr)
        return EXIT_CONFIG
    if args.verbose:
        logging.getLogger("triquad").setLevel(logging.DEBUG if args.verbose > 1 else logging.INFO)

    result, code = execute(cfg, args.command, args)
    if "error" in result:
        print(json.dumps(result, indent=2, sort_keys=True), file=sys.stderr)
        # A failed validation still carries its full verdict table.
        if args.command != "validate" or code != EXIT_HYPOTHESIS:
            return code
        result = {"command": "validate", "payload": result["error"]["details"], "timing": {}}
    fmt = cfg.output.format
    rows = None
    if args.command == "benchmark" and fmt == "csv":
        rows = [dict(r, wall_time=t) for r, t in zip(result["payload"]["rows"], result["timing"]["rows"])]
    text = render(result, fmt, args.command, rows)
    path = cfg.output.resolved_path()
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
        except OSError as exc:
            print(json.dumps({"error": {"type": "OSError", "message": str(exc), "exit_code": EXIT_CONFIG}}),
                  file=sys.stderr)
            return EXIT_CONFIG
    return code


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
