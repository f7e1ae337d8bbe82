"""Path functionals and solvers for equations whose generators read a functional of the value path.

A functional ``G`` maps a discrete value path ``y`` (M, N+1, n) and a time
index ``k`` to an (M, n) array that only depends on ``y`` up to ``k``.  The
registry kinds read the window ``[(t_k - eps)^+, t_k]``, with the left end
snapped down to the grid:

delayed_value
    ``y`` at the left end of the window.
running_max
    Componentwise max over the window.
moving_average
    Left-endpoint Riemann sum over the window divided by ``max(eps, window
    length)``; the snapped window can be up to one step longer than ``eps``
    and the larger divisor keeps the map 1-Lipschitz.  ``eps = 0`` gives
    ``y_k``.
cumulative_integral
    Left-endpoint Riemann sum over the window (1-Lipschitz while the window
    length stays at most 1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .constants import log_epsilon0
from .errors import ConvergenceError, EpsilonTooLargeError, HypothesisError
from .fixedpoint import run_picard
from .global_solver import check_delay_hypotheses, plan_global, solve_global_on_bundle
from .grid_paths import make_grid, simulate_brownian
from .model import AssumptionCheck, ValidationReport
from .regress import BasisSpec

logger = logging.getLogger(__name__)

__all__ = [
    "FUNCTIONAL_KINDS",
    "PathFunctional",
    "CallbackFunctional",
    "evaluate_functional",
    "evaluate_functional_path",
    "validate_functional",
    "solve_pathdep_local",
    "solve_delay",
]

FUNCTIONAL_KINDS = ("delayed_value", "running_max", "moving_average", "cumulative_integral")

_SNAP_TOL = 1e-12


@dataclass(frozen=True)
class PathFunctional:
    kind: str
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in FUNCTIONAL_KINDS:
            raise ValueError(f"unknown functional kind {self.kind!r}")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError("functional window epsilon must be a nonnegative real")

    @property
    def window(self) -> float:
        return self.epsilon

    @property
    def is_identity(self) -> bool:
        return self.epsilon == 0 and self.kind in ("delayed_value", "running_max", "moving_average")

    def to_dict(self):
        return {"kind": self.kind, "epsilon": self.epsilon}


@dataclass(frozen=True, eq=False)
class CallbackFunctional:
    """User functional ``fn(y, k, grid) -> (M, n)``; ``window`` is its declared look-back (None = whole past)."""

    fn: Callable
    name: str = "callback"
    window: float | None = None
    is_identity = False

    def __call__(self, y, k, grid):
        return np.asarray(self.fn(y, k, grid), dtype=float)


def _left_index(times, k, eps):
    target = max(times[k] - eps, times[0])
    j = int(np.searchsorted(times, target + _SNAP_TOL * (1.0 + abs(target)), side="right")) - 1
    return min(max(j, 0), k)


def evaluate_functional(G, y, k: int, grid) -> np.ndarray:
    """Value of ``G`` at grid index ``k`` for every path; shape (M, n)."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 2:
        y = y[:, :, None]
    if not 0 <= k < y.shape[1]:
        raise IndexError(f"time index {k} outside 0..{y.shape[1] - 1}")
    if isinstance(G, CallbackFunctional):
        return G(y, k, grid)
    times, dt = grid.times, grid.dt
    j0 = _left_index(times, k, G.epsilon)
    if G.kind == "delayed_value":
        return y[:, j0].copy()
    if G.kind == "running_max":
        return y[:, j0:k + 1].max(axis=1)
    integral = np.zeros((y.shape[0], y.shape[2]))
    for j in range(j0, k):
        integral += y[:, j] * dt[j]
    if G.kind == "cumulative_integral":
        return integral
    length = times[k] - times[j0]
    if length == 0.0:
        return y[:, k].copy()
    return integral / max(G.epsilon, length)


def evaluate_functional_path(G, y, grid) -> np.ndarray:
    """``G`` at every grid index; shape (M, N+1, n)."""
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    for k in range(y.shape[1]):
        out[:, k] = evaluate_functional(G, y, k, grid)
    return out


def _random_paths(rng, m, N, n):
    scale = 10.0 ** rng.uniform(-2.0, 1.0, size=(m, 1, 1))
    steps = rng.standard_normal((m, N + 1, n)) * scale
    walk = np.cumsum(steps, axis=1) / math.sqrt(N)
    jumps = rng.uniform(-1, 1, size=(m, N + 1, n)) * scale
    mix = rng.uniform(size=(m, 1, 1)) < 0.5
    return np.where(mix, walk, jumps)


def validate_functional(G, probes: int = 1000, seed: int = 0, grid=None, n: int = 1,
                        tolerance: float = 1e-12) -> ValidationReport:
    """Probe G(0) = 0, nonanticipativity and the Lipschitz bounds.

    Checks reported: ``G0``, ``nonanticipative``, ``A5`` (Lipschitz against
    the sup over [0, t]) and, for windowed functionals, ``A6`` (against the
    sup over the window).  Distances are componentwise maxima.  Violations
    are raw excesses ``max(lhs - rhs, 0)``.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    grid = make_grid(1.0, 40) if grid is None else grid
    rng = np.random.default_rng(seed)
    N = grid.N
    y = _random_paths(rng, probes, N, n)
    # Half the partners are small perturbations, half are unrelated paths.
    yb = np.where(rng.uniform(size=(probes, 1, 1)) < 0.5,
                  y + 1e-2 * _random_paths(rng, probes, N, n), _random_paths(rng, probes, N, n))
    zero = np.zeros((probes, N + 1, n))
    window = getattr(G, "window", None)

    worst = {"G0": 0.0, "nonanticipative": 0.0, "A5": 0.0, "A6": 0.0}
    diff = np.abs(y - yb)
    for k in range(N + 1):
        g0 = evaluate_functional(G, zero, k, grid)
        worst["G0"] = max(worst["G0"], float(np.max(np.abs(g0))))
        gy = evaluate_functional(G, y, k, grid)
        gyb = evaluate_functional(G, yb, k, grid)
        if k < N:
            yf = y.copy()
            yf[:, k + 1:] += 1.0 + _random_paths(rng, probes, N, n)[:, k + 1:]
            worst["nonanticipative"] = max(worst["nonanticipative"],
                                           float(np.max(np.abs(evaluate_functional(G, yf, k, grid) - gy))))
        lhs = np.max(np.abs(gy - gyb), axis=1)
        rhs5 = np.max(diff[:, :k + 1], axis=(1, 2))
        worst["A5"] = max(worst["A5"], float(np.max(lhs - rhs5)))
        if window is not None:
            j0 = _left_index(grid.times, k, window)
            rhs6 = np.max(diff[:, j0:k + 1], axis=(1, 2))
            worst["A6"] = max(worst["A6"], float(np.max(lhs - rhs6)))

    ids = ["G0", "nonanticipative", "A5"] + (["A6"] if window is not None else [])
    checks = tuple(AssumptionCheck(key, probes, max(worst[key], 0.0), worst[key] <= tolerance) for key in ids)
    return ValidationReport(checks, seed, tolerance)


def _as_list(functionals, n):
    if isinstance(functionals, (PathFunctional, CallbackFunctional)):
        return [functionals] * n
    out = list(functionals)
    if len(out) != n:
        raise ValueError(f"need one functional per component ({n}), got {len(out)}")
    return out


def _feeds(spec, functionals, grid):
    """y_feed and features_for callables for the Picard map."""
    reads_y = spec.reads_y
    active = [reads_y[i] and not functionals[i].is_identity for i in range(spec.n)]

    def y_feed(Y):
        return [evaluate_functional_path(G, Y, grid) for G in functionals]

    def features_for(i, y_i):
        if not active[i - 1]:
            return None
        return lambda k: y_i[:, k, :]

    return y_feed, features_for, active


def solve_pathdep_local(spec, functionals, bundle, basis: BasisSpec = BasisSpec(), tol: float | None = None,
                        max_iter: int = 25, backend: str = "colehopf", providers=None, validate: bool = True):
    """Short-horizon solve with generator value arguments replaced by G^i(Y).

    ``functionals`` is one functional for all components or a list with one
    per component.  The short-horizon constants of the plain system are
    reused for the horizon check and the bound checks; the report says so.
    """
    fs = _as_list(functionals, spec.n)
    if validate:
        for i, G in enumerate(fs, start=1):
            rep = validate_functional(G, probes=200, grid=bundle.grid, n=spec.n)
            if not rep.passed:
                failed = [c.assumption_id for c in rep.checks if not c.passed]
                raise HypothesisError(f"functional for component {i} fails {failed}", rep.to_dict())
    y_feed, features_for, active = _feeds(spec, fs, bundle.grid)
    pair, report = run_picard(spec, bundle, basis, tol, max_iter, backend, providers,
                              y_feed=y_feed, features_for=features_for)
    report.notes.append("short-horizon constants of the plain system reused for the path-dependent equation")
    report.constants["functional_features"] = active
    return pair, report


@dataclass
class OuterReport:
    distances: list
    ratios: list
    converged: bool
    epsilon: float
    epsilon0: float
    log_epsilon0: float
    gamma: float
    tolerance: float
    plan: dict
    hypotheses: dict

    def to_dict(self):
        return dict(self.__dict__)


def solve_delay(spec, kinds, epsilon: float, M: int, N_per_interval: int, seed: int,
                basis: BasisSpec = BasisSpec(), outer_tol: float | None = None, outer_max_iter: int = 15,
                tol: float | None = None, max_iter: int = 25, providers=None, backend: str = "colehopf",
                workers: int = 1, bundle=None):
    """Delay equation via the outer iteration on the value path.

    ``kinds`` is a functional kind (or list per component); every functional
    uses window ``epsilon``.  Each outer step freezes ``G^{i,eps}(y)``, solves
    the resulting equation globally by stitching and measures the sup-norm
    change of Y.

    Raises
    ------
    EpsilonTooLargeError
        If ``epsilon`` exceeds the admissible window.
    HypothesisError
        If the delay hypotheses fail (k parts present, |l| > C, h outside
        [-C(1+|z|^(1+alpha)), 0]).
    ConvergenceError
        If the outer iteration does not reach ``outer_tol``.
    """
    if not (math.isfinite(epsilon) and epsilon > 0):
        raise ValueError("delay window epsilon must be positive")
    le0 = log_epsilon0(spec, providers)
    eps0 = math.exp(le0) if le0 < 709 else math.inf
    if math.log(epsilon) > le0:
        raise EpsilonTooLargeError(
            f"epsilon={epsilon:.6g} exceeds the admissible window epsilon0={eps0:.6g} (log {le0:.6g})",
            {"epsilon": epsilon, "epsilon0": eps0, "log_epsilon0": le0})
    hyp = check_delay_hypotheses(spec)
    if not hyp.passed:
        raise HypothesisError("delay hypotheses violated: " + "; ".join(hyp.violations), hyp.to_dict())
    if isinstance(kinds, str):
        kinds = [kinds] * spec.n
    fs = [PathFunctional(kind, epsilon) for kind in _as_list(kinds, spec.n)]
    if outer_tol is None:
        outer_tol = 1e-3 * (1.0 + spec.xi_bound)

    plan = plan_global(spec, providers)
    if bundle is None:
        grid = make_grid(spec.horizon, plan.K * N_per_interval)
        bundle = simulate_brownian(grid, M, spec.d, seed, workers)
    y_feed, features_for, _ = _feeds(spec, fs, bundle.grid)

    y = np.zeros((bundle.M, bundle.N + 1, spec.n))
    distances, ratios = [], []
    converged = False
    pair = None
    global_report = None
    for it in range(1, outer_max_iter + 1):
        frozen = y_feed(y)
        pair, global_report = solve_global_on_bundle(
            spec, bundle, plan, N_per_interval, basis, tol, max_iter, providers, backend,
            frozen_y=frozen, features_for=features_for)
        dist = float(np.max(np.abs(pair.Y - y)))
        ratios.append(None if not distances else (dist / distances[-1] if distances[-1] > 0 else 0.0))
        distances.append(dist)
        logger.debug("outer iteration %d: sup distance %.3g", it, dist)
        y = pair.Y
        if dist <= outer_tol:
            converged = True
            break

    report = OuterReport(distances, ratios, converged, epsilon, eps0, le0, 1.0 / epsilon, outer_tol,
                         plan.to_dict(), hyp.to_dict())
    report.global_report = global_report
    pair.bundle = bundle
    if not converged:
        raise ConvergenceError(
            f"outer delay iteration did not reach {outer_tol:.3g} in {outer_max_iter} iterations", report)
    return pair, report
