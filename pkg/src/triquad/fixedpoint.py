"""Triangular Picard map and its iteration on a short horizon."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bmo import bmo_norm_estimate
from .constants import local_constants, contraction_constants
from .errors import ConvergenceError, TriquadError
from .grid_paths import evaluate_terminal, simulate_brownian
from .regress import BasisSpec, fit_conditional, predict
from .scalar_solver import BACKENDS, FrozenInputs

logger = logging.getLogger(__name__)

__all__ = [
    "ProcessPair", "FixedPointReport", "zero_pair", "picard_map", "run_picard", "distance", "transport",
    "batch_standard_error",
]


@dataclass(eq=False)
class ProcessPair:
    """Y (M, N+1, n) and Z (M, N, n, d) on ``grid``, simulated from ``seed``."""

    Y: np.ndarray
    Z: np.ndarray
    grid: object
    seed: int
    diagnostics: list = field(default_factory=list)

    def check(self, bundle, n) -> None:
        if self.Y.shape != (bundle.M, bundle.N + 1, n) or self.Z.shape != (bundle.M, bundle.N, n, bundle.d):
            raise ValueError("process pair shapes do not match the bundle")


@dataclass
class FixedPointReport:
    iterations: list
    converged: bool
    bound_checks: dict
    eta_satisfied: bool
    tolerance: float
    constants: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iterations": [dict(it) for it in self.iterations],
            "converged": self.converged,
            "bound_checks": dict(self.bound_checks),
            "eta_satisfied": self.eta_satisfied,
            "tolerance": self.tolerance,
            "constants": dict(self.constants),
            "notes": list(self.notes),
        }


def zero_pair(spec, bundle) -> ProcessPair:
    M, N, d, n = bundle.M, bundle.N, bundle.d, spec.n
    return ProcessPair(np.zeros((M, N + 1, n)), np.zeros((M, N, n, d)), bundle.grid, bundle.seed)


def picard_map(spec, bundle, inp: ProcessPair, basis: BasisSpec = BasisSpec(), backend: str = "colehopf",
               terminal=None, xi_bound: float | None = None, y_feed=None, features_for=None,
               measure_bmo: bool = False) -> ProcessPair:
    """One application of the triangular map (y, z) -> (Y, Z).

    ``y_feed(Y)`` replaces the value argument seen by the generators (used for
    path-dependent problems).  It returns one (M, N+1, n) array shared by all
    components or a list with one such array per component.
    ``features_for(i, y_frozen_i)`` may return an ``extra_features`` callable
    for component ``i``.
    """
    inp.check(bundle, spec.n)
    solver = BACKENDS[backend]
    M, N, d, n = bundle.M, bundle.N, bundle.d, spec.n
    if terminal is None:
        terminal = evaluate_terminal(spec, bundle)
    y_frozen = inp.Y if y_feed is None else y_feed(inp.Y)
    Y = np.empty((M, N + 1, n))
    Z = np.empty((M, N, n, d))
    diags = []
    for i in range(1, n + 1):
        y_i = y_frozen[i - 1] if isinstance(y_frozen, (list, tuple)) else y_frozen
        frozen = FrozenInputs(y_i, inp.Z, Z[:, :, : i - 1, :])
        extra = None if features_for is None else features_for(i, y_i)
        try:
            sol = solver(spec, i, frozen, bundle, basis, terminal=terminal, xi_bound=xi_bound,
                         extra_features=extra, measure_bmo=measure_bmo)
        except TriquadError as exc:
            if exc.args and not str(exc.args[0]).startswith("component"):
                exc.args = (f"component {i}: {exc.args[0]}",) + exc.args[1:]
            exc.component = i
            raise
        Y[:, :, i - 1] = sol.Y
        Z[:, :, i - 1, :] = sol.Z
        diags.append({k: v for k, v in sol.diagnostics.items() if not isinstance(v, np.ndarray)})
    return ProcessPair(Y, Z, bundle.grid, bundle.seed, diags)


def distance(a: ProcessPair, b: ProcessPair, bundle, basis: BasisSpec = BasisSpec()) -> dict:
    """dY_sup = max |Y_a - Y_b|, dZ_bmo_sq = BMO^2 estimate of (Z_a - Z_b), combined = dY_sup^2 + dZ_bmo_sq."""
    if a.Y.shape != b.Y.shape or a.Z.shape != b.Z.shape:
        raise ValueError("process pairs have different shapes")
    dy = float(np.max(np.abs(a.Y - b.Y)))
    dz = bmo_norm_estimate(a.Z - b.Z, bundle, basis).value
    return {"dY_sup": dy, "dZ_bmo_sq": dz, "combined": dy * dy + dz}


def transport(pair: ProcessPair, source, target, basis: BasisSpec = BasisSpec()) -> ProcessPair:
    """Move a pair onto another bundle by regressing each node on the time-t_k Brownian level."""
    if source.grid != target.grid:
        raise ValueError("bundles must share a grid")
    M = target.M
    n = pair.Y.shape[2]
    d = pair.Z.shape[3]
    Y = np.empty((M, target.N + 1, n))
    Z = np.empty((M, target.N, n, d))
    for k in range(target.N + 1):
        xs, xt = source.cumulative[:, k], target.cumulative[:, k]
        for i in range(n):
            Y[:, k, i] = predict(fit_conditional(xs, pair.Y[:, k, i], None, basis), xt)
            if k < target.N:
                for j in range(d):
                    Z[:, k, i, j] = predict(fit_conditional(xs, pair.Z[:, k, i, j], None, basis), xt)
    return ProcessPair(Y, Z, target.grid, target.seed)


def _ratio(cur, prev):
    if prev is None:
        return None
    if prev == 0.0:
        return 0.0 if cur == 0.0 else math.inf
    return cur / prev


def run_picard(spec, bundle, basis: BasisSpec = BasisSpec(), tol: float | None = None, max_iter: int = 25,
               backend: str = "colehopf", providers=None, terminal=None, xi_bound: float | None = None,
               y_feed=None, features_for=None, distinct_seeds: bool = False, check_bounds: bool = True,
               raise_on_failure: bool = True):
    """Iterate the Picard map from the zero pair until the combined distance is at most ``tol``.

    Returns ``(pair, report)``.  ``terminal``/``xi_bound`` override the
    terminal samples and their bound (used on stitched subintervals).  With
    ``distinct_seeds`` iteration j runs on a fresh bundle seeded ``seed + j - 1``
    and the previous iterate is transported onto it by regression.

    Raises
    ------
    ConvergenceError
        When ``max_iter`` is reached without meeting ``tol`` (report attached).
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    if distinct_seeds and terminal is not None:
        raise ValueError("distinct-seed mode needs terminal values computed from each bundle")
    xb = spec.xi_bound if xi_bound is None else float(xi_bound)
    if tol is None:
        tol = 1e-4 * (1.0 + xb)
    if not tol > 0:
        raise ValueError("tol must be positive")

    horizon = bundle.grid.horizon
    loc = local_constants(spec, providers, xb)
    con = contraction_constants(spec, providers, loc.B, horizon=horizon)
    eta_local = min(loc.eta, con.etabar1, con.etabar2)
    eta_ok = horizon <= eta_local
    notes = []
    if not eta_ok:
        msg = f"horizon {horizon:.6g} exceeds the short-horizon bound {eta_local:.6g}; contraction is not guaranteed"
        # Reported in the notes; stitched and batched solves would repeat it many times.
        logger.info(msg)
        notes.append(msg)

    cur = zero_pair(spec, bundle)
    cur_bundle = bundle
    iterations = []
    prev = None
    converged = False
    for j in range(1, max_iter + 1):
        if distinct_seeds and j > 1:
            new_bundle = simulate_brownian(bundle.grid, bundle.M, bundle.d, bundle.seed + j - 1)
            cur = transport(cur, cur_bundle, new_bundle, basis)
            cur_bundle = new_bundle
        nxt = picard_map(spec, cur_bundle, cur, basis, backend, terminal, xb, y_feed, features_for)
        dist = distance(nxt, cur, cur_bundle, basis)
        dist["ratio"] = _ratio(dist["combined"], prev)
        iterations.append(dist)
        logger.debug("picard iteration %d: %s", j, dist)
        prev = dist["combined"]
        cur = nxt
        if dist["combined"] <= tol:
            converged = True
            break

    bound_checks = {}
    if check_bounds:
        se = max((dg.get("y0_stderr", 0.0) for dg in cur.diagnostics), default=0.0)
        y_sup = float(np.max(np.abs(cur.Y)))
        z_bmo = bmo_norm_estimate(cur.Z, cur_bundle, basis).value
        bound_checks = {
            "Y_sup": y_sup,
            "Z_bmo_sq": z_bmo,
            "A": loc.A,
            "B_sq": loc.B ** 2,
            "stderr": se,
            "tolerance": "3 standard errors",
            "Y_sup_le_A": bool(y_sup <= loc.A + 3 * se),
            "Z_bmo_sq_le_B_sq": bool(z_bmo <= loc.B ** 2 + 3 * se),
        }
    report = FixedPointReport(
        iterations, converged, bound_checks, eta_ok, tol,
        {"A": loc.A, "B": loc.B, "eta": loc.eta, "etabar1": con.etabar1, "etabar2": con.etabar2,
         "eta_local": eta_local, "horizon": horizon},
        notes,
    )
    cur.bundle = cur_bundle
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"Picard iteration did not reach tol={tol:.3g} in {max_iter} iterations "
            f"(last combined distance {iterations[-1]['combined']:.3g})", report)
    return cur, report


def batch_standard_error(solve, bundle, batches: int = 10) -> np.ndarray:
    """Batch-means standard error of a time-0 estimate.

    ``solve(sub_bundle)`` must return the estimate (any array shape) computed
    on a sub-bundle.  The paths are split into ``batches`` disjoint blocks and
    the spread of the block estimates gives the error of the full-sample
    estimate.  Unlike the pathwise error, this includes the sampling noise of
    every regression feeding the estimate.
    """
    if batches < 2 or bundle.M < 2 * batches:
        raise ValueError("need at least two batches with two paths each")
    edges = np.linspace(0, bundle.M, batches + 1).astype(int)
    vals = np.array([np.asarray(solve(bundle.subset(lo, hi)), dtype=float)
                     for lo, hi in zip(edges[:-1], edges[1:])])
    return vals.std(axis=0, ddof=1) / math.sqrt(batches)
