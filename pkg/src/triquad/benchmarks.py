"""Benchmark registry with closed-form and manufactured solutions.

Suites
------
closed-form
    Gaussian moment-generating-function solutions driven by ``xi = W_T``.
manufactured
    Constant ``h`` with zero terminal value, where ``Y_t = a (T - t)`` and
    ``Z = 0`` solve the system exactly.
convergence
    The scalar ``W_T`` case with paths and steps doubled row by row.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import TriquadError
from .fixedpoint import run_picard
from .grid_paths import make_grid, simulate_brownian
from .model import ProblemSpec, TerminalPart
from .regress import BasisSpec

logger = logging.getLogger(__name__)

__all__ = ["BenchmarkCase", "REGISTRY", "SUITES", "CSV_COLUMNS", "run_case", "run_suite", "rows_to_csv"]

# Six standard deviations of W_T at the default horizon 0.25: clamping probability ~ 2e-9.
WT_CLAMP = 3.0
DRIFT = 0.5
H_LEVELS = (-0.5, -0.25)


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    suite: str
    build: Callable[[float], ProblemSpec]
    exact_y0: Callable[[float], np.ndarray]
    z_kind: str  # "one": first control row ~ 1; "zero": all controls ~ 0
    horizon: float = 0.25


def _clamped_wt():
    return TerminalPart("clamped_affine", {"bound": WT_CLAMP})


def _zero_terminal():
    return TerminalPart("constant", {"value": 0.0})


def _wt_scalar(T):
    return ProblemSpec(1, 1, T, 0.0, 0.0, [_clamped_wt()])


def _wt_drift(T):
    return ProblemSpec(1, 1, T, DRIFT, 0.0, [_clamped_wt()], l_parts=[{"family": "constant", "value": DRIFT}])


def _triangular(T):
    return ProblemSpec(2, 1, T, 1.0, 0.0, [_clamped_wt(), _zero_terminal()],
                       k_parts=[{"family": "z_block_quadratic", "weights": [1.0]}])


def _const_h_scalar(T):
    return ProblemSpec(1, 1, T, abs(H_LEVELS[0]), 0.0, [_zero_terminal()],
                       h_parts=[{"family": "constant", "value": H_LEVELS[0]}])


def _const_h_triangular(T):
    return ProblemSpec(2, 1, T, 1.0, 0.0, [_zero_terminal(), _zero_terminal()],
                       k_parts=[{"family": "z_block_quadratic", "weights": [1.0]}],
                       h_parts=[{"family": "constant", "value": a} for a in H_LEVELS])


REGISTRY = {
    c.name: c
    for c in (
        BenchmarkCase("wt_scalar", "closed-form", _wt_scalar, lambda T: np.array([T / 2]), "one"),
        BenchmarkCase("wt_drift", "closed-form", _wt_drift, lambda T: np.array([(0.5 + DRIFT) * T]), "one"),
        BenchmarkCase("triangular", "closed-form", _triangular, lambda T: np.array([T / 2, -T]), "one"),
        BenchmarkCase("const_h_scalar", "manufactured", _const_h_scalar,
                      lambda T: np.array([H_LEVELS[0] * T]), "zero"),
        BenchmarkCase("const_h_triangular", "manufactured", _const_h_triangular,
                      lambda T: np.array(H_LEVELS) * T, "zero"),
    )
}

SUITES = ("closed-form", "manufactured", "convergence")

CSV_COLUMNS = ("case", "backend", "M", "N", "Y0", "Y0_error", "Y0_stderr", "Z_error_proxy", "ratio",
               "A_margin", "B2_margin", "wall_time", "error")


def run_case(case: BenchmarkCase, M: int, N: int, seed: int, basis: BasisSpec = BasisSpec(),
             backend: str = "colehopf", providers=None, workers: int = 1) -> dict:
    """Solve one registry case and summarise it as a table row (errors are caught into the row)."""
    t0 = time.perf_counter()
    row = {"case": case.name, "backend": backend, "M": M, "N": N}
    try:
        spec = case.build(case.horizon)
        bundle = simulate_brownian(make_grid(spec.horizon, N), M, spec.d, seed, workers)
        pair, rep = run_picard(spec, bundle, basis, backend=backend, providers=providers)
        y0 = pair.Y[:, 0].mean(axis=0)
        exact = case.exact_y0(spec.horizon)
        row["Y0"] = float(y0[0])
        row["Y0_error"] = float(np.max(np.abs(y0 - exact)))
        row["Y0_stderr"] = float(max(dg["y0_stderr"] for dg in pair.diagnostics))
        if case.z_kind == "one":
            row["Z_error_proxy"] = float(abs(pair.Z[:, :, 0, 0].mean() - 1.0))
        else:
            row["Z_error_proxy"] = float(np.max(np.abs(pair.Z)))
        ratios = [it["ratio"] for it in rep.iterations if it["ratio"] is not None]
        row["ratio"] = float(ratios[-1]) if ratios else None
        bc = rep.bound_checks
        row["A_margin"] = float(bc["A"] - bc["Y_sup"])
        row["B2_margin"] = float(bc["B_sq"] - bc["Z_bmo_sq"])
        row["error"] = ""
    except TriquadError as exc:
        logger.warning("benchmark %s failed: %s", case.name, exc)
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_time"] = time.perf_counter() - t0
    return row


def run_suite(suite: str, M: int = 1000, N: int = 10, seed: int = 0, basis: BasisSpec = BasisSpec(),
              backends=("colehopf", "euler"), providers=None, workers: int = 1, doublings: int = 3) -> list:
    """Rows for a suite.  The convergence suite doubles M and N ``doublings`` times."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    rows = []
    if suite == "convergence":
        case = REGISTRY["wt_scalar"]
        for r in range(doublings + 1):
            rows.append(run_case(case, M * 2 ** r, N * 2 ** r, seed, basis, "colehopf", providers, workers))
        return rows
    for case in REGISTRY.values():
        if case.suite != suite:
            continue
        for backend in backends:
            rows.append(run_case(case, M, N, seed, basis, backend, providers, workers))
    return rows


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def rows_to_csv(rows) -> str:
    """CSV text with 17 significant digits and '\\n' line endings."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(col)) for col in CSV_COLUMNS])
    return buf.getvalue()
