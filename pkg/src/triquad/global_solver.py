"""Global solution on [0, T] by stitching short-horizon Picard solves."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bmo import bmo_norm_estimate
from .constants import beta_ode, eta_for_bound
from .errors import BoundBreachError, ConvergenceError, DegenerateHorizonError, HypothesisError
from .fixedpoint import ProcessPair, run_picard
from .grid_paths import evaluate_terminal, make_grid, simulate_brownian
from .model import GeneratorDescriptor, _probe_points
from .regress import BasisSpec

logger = logging.getLogger(__name__)

__all__ = [
    "MAX_INTERVALS",
    "HypothesisReport",
    "GlobalPlan",
    "check_global_hypotheses",
    "check_delay_hypotheses",
    "plan_global",
    "solve_global",
    "solve_global_on_bundle",
]

MAX_INTERVALS = 1_000_000


@dataclass
class HypothesisReport:
    passed: bool
    violations: list = field(default_factory=list)
    probes_run: int = 0

    def to_dict(self):
        return {"passed": self.passed, "violations": list(self.violations), "probes_run": self.probes_run}


def _probe_sign_and_size(spec, probes, seed, h_lower=False):
    C, a = spec.lipschitz_C, spec.alpha
    rng = np.random.default_rng(seed)
    t, y, z, _, _ = _probe_points(spec, probes, rng)
    violations = []
    znorm = np.sqrt(np.sum(z ** 2, axis=(1, 2)))
    for i in range(1, spec.n + 1):
        hv = spec.h_value(i, t, y, z)
        worst = float(np.max(hv))
        if worst > 0:
            violations.append(f"h[{i}] positive (max {worst:.3g})")
        if h_lower:
            low = -C * (1 + znorm ** (1 + a))
            breach = float(np.max(low - hv))
            if breach > 1e-9 * (1 + C):
                violations.append(f"h[{i}] below -C(1+|z|^(1+alpha)) (by {breach:.3g})")
        lv = np.linalg.norm(spec.l_value(i, t, y, z), axis=1)
        excess = float(np.max(lv)) - C
        if excess > 1e-12 * (1 + C):
            violations.append(f"|l[{i}]| exceeds C (max {float(np.max(lv)):.3g} > {C:.3g})")
    return violations


def _metadata_violations(spec):
    C = spec.lipschitz_C
    out = []
    for i, part in enumerate(spec.h_parts, start=1):
        if part.is_nonpositive() is False and isinstance(part, GeneratorDescriptor) and part.sup_abs(C) is not None:
            out.append(f"h[{i}] positive by declaration ({part.family})")
    for i, part in enumerate(spec.l_parts, start=1):
        s = part.sup_abs(C)
        if s is not None and isinstance(part, GeneratorDescriptor):
            if s * float(np.linalg.norm(part.direction(spec.d))) > C * (1 + 1e-12):
                out.append(f"|l[{i}]| exceeds C by declaration ({part.family})")
    return out


def check_global_hypotheses(spec, probes: int = 1000, seed: int = 0) -> HypothesisReport:
    """Check h^i <= 0 and |l^i| <= C by registry metadata plus random probes."""
    violations = _metadata_violations(spec)
    for v in _probe_sign_and_size(spec, probes, seed):
        if v.split(" ")[0] not in {w.split(" ")[0] for w in violations}:
            violations.append(v)
    return HypothesisReport(not violations, violations, probes)


def check_delay_hypotheses(spec, probes: int = 1000, seed: int = 0) -> HypothesisReport:
    """Delay-equation hypotheses: no k parts, |l^i| <= C, -C(1+|z|^(1+alpha)) <= h^i <= 0."""
    violations = []
    if spec.has_k():
        violations.append("delay equations carry no k parts")
    violations += _metadata_violations(spec)
    seen = {w.split(" ")[0] for w in violations}
    for v in _probe_sign_and_size(spec, probes, seed, h_lower=True):
        if v.split(" ")[0] not in seen or "below" in v:
            violations.append(v)
    return HypothesisReport(not violations, violations, probes)


@dataclass(frozen=True)
class GlobalPlan:
    lam: float
    eta_lambda: float
    knots: tuple
    beta_K1: float
    beta_K2: float

    @property
    def K(self) -> int:
        return len(self.knots) - 1

    def beta(self, t):
        T = self.knots[0]
        with np.errstate(over="ignore"):
            return self.beta_K1 * np.exp(self.beta_K2 * (T - np.asarray(t, dtype=float)))

    def to_dict(self):
        return {"lambda": self.lam, "eta_lambda": self.eta_lambda, "intervals": self.K,
                "knots": list(self.knots), "K1": self.beta_K1, "K2": self.beta_K2}


def plan_global(spec, providers=None) -> GlobalPlan:
    """lambda = beta_0, eta_lambda = eta at terminal bound lambda, and uniform knots T = s_0 > ... > s_K = 0."""
    beta = beta_ode(spec)
    lam = beta.lam
    if not math.isfinite(lam):
        raise DegenerateHorizonError(f"uniform bound lambda overflows (K1={beta.K1:.3g}, K2={beta.K2:.3g})")
    eta_lam = eta_for_bound(spec, providers, lam)
    T = spec.horizon
    if not eta_lam > 0:
        raise DegenerateHorizonError(f"step size eta_lambda={eta_lam!r} is not positive (lambda={lam:.6g})")
    if T <= eta_lam:
        K = 1
    else:
        K = math.ceil(T / (eta_lam * (1.0 - 1e-9)))
    if K > MAX_INTERVALS:
        raise DegenerateHorizonError(
            f"{K} intervals needed (eta_lambda={eta_lam:.6g}, T={T:.6g}) exceeds the cap {MAX_INTERVALS}")
    knots = tuple(T * (K - j) / K for j in range(K + 1))
    return GlobalPlan(lam, eta_lam, knots, beta.K1, beta.K2)


def _window_values(frozen_y, k0, k1):
    if isinstance(frozen_y, (list, tuple)):
        return [y[:, k0:k1 + 1] for y in frozen_y]
    return frozen_y[:, k0:k1 + 1]


def solve_global_on_bundle(spec, bundle, plan: GlobalPlan, N_per_interval: int, basis: BasisSpec = BasisSpec(),
                           tol: float | None = None, max_iter: int = 25, providers=None, backend: str = "colehopf",
                           frozen_y=None, features_for=None, check: bool = True):
    """Backward stitching on a bundle whose grid has ``K * N_per_interval`` steps.

    Returns ``(pair, report)``.  Interval j (counted from T) is solved with
    ``run_picard`` on the window of the bundle, with terminal samples equal to
    the already computed Y at its right knot, so knots are continuous by
    construction.  The interval touching T uses the problem's own terminal
    bound; earlier intervals use beta at their right knot.

    ``frozen_y`` (M, N+1, n), or a list of such arrays per component, when given, replaces the value argument of the
    generators on every interval (used by the delay solver), and
    ``features_for(i, y_window)`` may add regression features.
    """
    K, Np = plan.K, N_per_interval
    if bundle.N != K * Np:
        raise ValueError(f"bundle has {bundle.N} steps, plan needs {K} x {Np}")
    M, n, d = bundle.M, spec.n, bundle.d
    Y = np.empty((M, bundle.N + 1, n))
    Z = np.empty((M, bundle.N, n, d))
    Y[:, -1] = evaluate_terminal(spec, bundle)
    times = bundle.grid.times
    intervals = []
    for j in range(K):
        k1 = bundle.N - j * Np
        k0 = k1 - Np
        win = bundle.window(k0, k1)
        sub_feed = None if frozen_y is None else (lambda _Y, a=k0, b=k1: _window_values(frozen_y, a, b))
        # Terminal samples always come from the full paths (a window would
        # truncate path-dependent terminals such as a running maximum).
        term = Y[:, k1].copy()
        xb = None if j == 0 else float(plan.beta(times[k1]))
        try:
            pair, rep = run_picard(spec, win, basis, tol, max_iter, backend, providers,
                                   terminal=term, xi_bound=xb, y_feed=sub_feed, features_for=features_for)
        except ConvergenceError as exc:
            exc.args = (f"interval {K - 1 - j}: {exc.args[0]}",) + exc.args[1:]
            exc.interval = K - 1 - j
            raise
        knot_jump = float(np.max(np.abs(pair.Y[:, -1] - term)))
        Y[:, k0:k1 + 1] = pair.Y
        Z[:, k0:k1] = pair.Z
        entry = {"interval": K - 1 - j, "t0": float(times[k0]), "t1": float(times[k1]), "knot_jump": knot_jump,
                 "iterations": len(rep.iterations), "converged": rep.converged,
                 "final_distance": rep.iterations[-1]["combined"],
                 "stderr": max((dg.get("y0_stderr", 0.0) for dg in pair.diagnostics), default=0.0)}
        if check:
            beta_t = plan.beta(times[k0:k1 + 1])
            excess = np.max(np.abs(pair.Y), axis=(0, 2)) - beta_t
            tolerance = 3.0 * entry["stderr"]
            entry["beta_margin"] = float(-excess.max())
            if excess.max() > tolerance:
                raise BoundBreachError(
                    f"|Y| exceeds beta_t by {excess.max():.3g} on interval {K - 1 - j}", interval=K - 1 - j,
                    report={"intervals": intervals + [entry]})
        intervals.append(entry)

    report = {"plan": plan.to_dict(), "intervals": intervals[::-1]}
    if check:
        bmo = bmo_norm_estimate(Z, bundle, basis).value
        se = max((e["stderr"] for e in intervals), default=0.0)
        report["bmo_sq"] = bmo
        report["bmo_bound"] = 8.0 * plan.lam
        report["bmo_tolerance"] = 3.0 * se
        report["bmo_ok"] = bool(bmo <= 8.0 * plan.lam + 3.0 * se)
        if not report["bmo_ok"]:
            raise BoundBreachError(f"BMO^2 estimate {bmo:.6g} exceeds 8*lambda={8 * plan.lam:.6g}",
                                   interval=None, report=report)
    return ProcessPair(Y, Z, bundle.grid, bundle.seed), report


def solve_global(spec, M: int, N_per_interval: int, seed: int, basis: BasisSpec = BasisSpec(),
                 tol: float | None = None, max_iter: int = 25, providers=None, backend: str = "colehopf",
                 workers: int = 1, require_hypotheses: bool = True):
    """Plan, simulate one bundle over [0, T] and stitch.  Returns ``(pair, report)``."""
    hyp = check_global_hypotheses(spec)
    if require_hypotheses and not hyp.passed:
        raise HypothesisError("global hypotheses violated: " + "; ".join(hyp.violations), hyp.to_dict())
    plan = plan_global(spec, providers)
    grid = make_grid(spec.horizon, plan.K * N_per_interval)
    bundle = simulate_brownian(grid, M, spec.d, seed, workers)
    pair, report = solve_global_on_bundle(spec, bundle, plan, N_per_interval, basis, tol, max_iter,
                                          providers, backend)
    report["hypotheses"] = hyp.to_dict()
    pair.bundle = bundle
    return pair, report
