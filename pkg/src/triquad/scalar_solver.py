"""Scalar component solvers with frozen Picard inputs.

Component ``i`` is solved with the input pair ``(y, z)`` frozen in ``h^i``
and the freshly computed control rows ``Z^1 .. Z^{i-1}`` fed to ``l^i`` and
``k^i``.  With ``g = h^i - k^i`` frozen this is a scalar BSDE with driver
``1/2 |Z|^2 + Z . l + g``, which the exponential transform turns into a
linear one:

    exp(Y_t) = E^Q[ exp(xi + int_t^T g ds) | F_t ],   dQ/dP = E(l . W)_T.

Two backends are provided.  :func:`solve_scalar_colehopf` discretises the
transformed equation; :func:`solve_scalar_euler` runs an explicit backward
Euler scheme on the quadratic driver directly and serves as an oracle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bmo import bmo_norm_estimate, stochastic_exponential
from .errors import NonPositiveTransformError
from .regress import BasisSpec, Projector

logger = logging.getLogger(__name__)

__all__ = ["FrozenInputs", "ScalarSolution", "zero_inputs", "solve_scalar_colehopf", "solve_scalar_euler"]

# Fraction of (path, step) nodes allowed to hit the positivity floor.
FLOOR_FRACTION = 1e-3


@dataclass(frozen=True, eq=False)
class FrozenInputs:
    """Picard input pair plus the already computed rows of the output control.

    ``y_paths`` (M, N+1, n) and ``z_paths`` (M, N, n, d) enter ``h``;
    ``fresh_Z_rows`` (M, N, i-1, d) enter ``l`` and ``k``.
    """

    y_paths: np.ndarray
    z_paths: np.ndarray
    fresh_Z_rows: np.ndarray

    def check(self, spec, bundle, i: int) -> None:
        M, N, d, n = bundle.M, bundle.N, bundle.d, spec.n
        if self.y_paths.shape != (M, N + 1, n):
            raise ValueError(f"y_paths shape {self.y_paths.shape} != {(M, N + 1, n)}")
        if self.z_paths.shape != (M, N, n, d):
            raise ValueError(f"z_paths shape {self.z_paths.shape} != {(M, N, n, d)}")
        if self.fresh_Z_rows.shape != (M, N, i - 1, d):
            raise ValueError(f"fresh_Z_rows shape {self.fresh_Z_rows.shape} != {(M, N, i - 1, d)}")


@dataclass(frozen=True, eq=False)
class ScalarSolution:
    Y: np.ndarray
    Z: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def zero_inputs(spec, bundle, i: int = 1) -> FrozenInputs:
    M, N, d, n = bundle.M, bundle.N, bundle.d, spec.n
    return FrozenInputs(np.zeros((M, N + 1, n)), np.zeros((M, N, n, d)), np.zeros((M, N, i - 1, d)))


def _lk_controls(frozen, i, k, own=None):
    """Control array for l/k at step k: fresh rows below i, own row (or frozen) at i and above."""
    z = frozen.z_paths[:, k].copy()
    if i > 1:
        z[:, : i - 1] = frozen.fresh_Z_rows[:, k]
    if own is not None:
        z[:, i - 1] = own
    return z


def _features(cum_t, k, extra_features):
    f = cum_t[k]
    if extra_features is None:
        return f
    extra = extra_features(k)
    if extra is None:
        return f
    return np.concatenate([f, np.asarray(extra, dtype=float).reshape(f.shape[0], -1)], axis=1)


def _time_major(a):
    """Contiguous copy with the time axis first; per-step slices are then cache friendly."""
    return np.ascontiguousarray(np.moveaxis(a, 1, 0))


def _terminal(spec, bundle, i, terminal):
    if terminal is None:
        from .grid_paths import evaluate_terminal

        return evaluate_terminal(spec, bundle)[:, i - 1]
    terminal = np.asarray(terminal, dtype=float)
    return terminal[:, i - 1] if terminal.ndim == 2 else terminal


def _norm_diagnostics(Y, Z, bundle, basis, measure_bmo):
    diag = {"sup_norm": float(np.max(np.abs(Y)))}
    diag["bmo_sq"] = bmo_norm_estimate(Z, bundle, basis).value if measure_bmo else float("nan")
    return diag


def solve_scalar_colehopf(spec, i: int, frozen: FrozenInputs, bundle, basis: BasisSpec = BasisSpec(),
                          terminal=None, xi_bound: float | None = None, extra_features=None,
                          measure_bmo: bool = True) -> ScalarSolution:
    """Solve component ``i`` through the exponential transform.

    Backward over k, with an F_k-measurable anchor ``m_k`` (the regressed
    ``Y_{k+1}``) and ``c_k = E^Q[exp(Y_{k+1} - m_k) | F_k]`` estimated by a
    regression weighted with the one-step density ratio ``E_{k+1}/E_k``:

        Y_k = m_k + log c_k + g_k dt_k
        Z_k = E^Q[(exp(Y_{k+1} - m_k) - c_k) (dW_k - a_k dt_k) | F_k] / (dt_k c_k)

    and ``Y_N = xi`` exactly.  ``terminal`` overrides the terminal samples
    (shape (M,) or (M, n)); ``extra_features(k)`` may return additional
    regression features at step k.

    Raises
    ------
    NonPositiveTransformError
        If more than 0.1% of nodes need the positivity floor.
    """
    frozen.check(spec, bundle, i)
    M, N, d = bundle.M, bundle.N, bundle.d
    times, dt = bundle.grid.times, bundle.grid.dt
    xi = _terminal(spec, bundle, i, terminal)
    xb = float(np.max(np.abs(xi))) if xi_bound is None else float(xi_bound)
    cum_t = _time_major(bundle.cumulative)
    inc_t = _time_major(bundle.increments)

    drift = np.empty((M, N, d))
    g = np.empty((N, M))
    for k in range(N):
        zlk = _lk_controls(frozen, i, k)
        y_k = frozen.y_paths[:, k]
        drift[:, k] = spec.l_value(i, times[k], y_k, zlk)
        g[k] = spec.h_value(i, times[k], y_k, frozen.z_paths[:, k]) - spec.k_value(i, times[k], zlk)
    weights = stochastic_exponential(drift, bundle, label=f"l[{i}]")
    log_w = _time_major(weights.log_values)
    drift_t = _time_major(drift)
    budget = float(np.sum(np.max(np.abs(g), axis=1) * dt)) + 1.0
    log_floor = -(xb + budget)

    Y = np.empty((N + 1, M))
    Z = np.empty((N, M, d))
    Y[N] = xi
    floor_hits = 0
    first_hit = None
    for k in range(N - 1, -1, -1):
        w = np.exp(log_w[k + 1] - log_w[k])
        feats = _features(cum_t, k, extra_features)
        # Pull the F_k-measurable factor exp(anchor) out of the conditional
        # expectation so the regressed target stays close to 1.
        proj = Projector(feats, w, basis)
        anchor = proj.fitted(Y[k + 1])
        target = np.exp(Y[k + 1] - anchor)
        c = proj.fitted(target)
        # Positivity floor exp(-(|xi| + budget)) on exp(Y_k), expressed relative to the anchor.
        floor = np.exp(np.minimum(log_floor - anchor, 700.0))
        low = c <= floor
        if low.any():
            floor_hits += int(low.sum())
            if first_hit is None:
                first_hit = (int(np.argmax(low)), k)
            c = np.where(low, floor, c)
        dw_tilde = inc_t[k] - drift_t[k] * dt[k]
        resid = target - c
        for j in range(d):
            Z[k, :, j] = proj.fitted(resid * dw_tilde[:, j]) / (dt[k] * c)
        Y[k] = anchor + np.log(c) + g[k] * dt[k]

    if floor_hits:
        logger.warning("component %d: %d node(s) hit the positivity floor exp(%.3g)", i, floor_hits, log_floor)
        if floor_hits > FLOOR_FRACTION * M * N:
            m, k = first_hit
            raise NonPositiveTransformError(
                f"component {i}: transformed value nonpositive at {floor_hits} nodes (first: path {m}, step {k})"
            )

    Y = np.ascontiguousarray(Y.T)
    Z = np.ascontiguousarray(np.moveaxis(Z, 0, 1))
    # Full-horizon pathwise estimator of exp(Y_0) and its delta-method error.
    h_integral = np.zeros((M, N + 1))
    np.cumsum(g.T * dt[None, :], axis=1, out=h_integral[:, 1:])
    pathwise = np.exp(weights.log_values[:, -1] + xi + h_integral[:, -1])
    mean = pathwise.mean()
    y0_se = float(pathwise.std(ddof=1) / (math.sqrt(M) * mean)) if M > 1 and mean > 0 else 0.0

    diag = _norm_diagnostics(Y, Z, bundle, basis, measure_bmo)
    diag.update(
        min_hatY=float(np.exp(Y.min())),
        floor_hits=floor_hits,
        y0_stderr=y0_se,
        hat_Y_full=np.exp(Y + h_integral),
        h_integral=h_integral,
        backend="colehopf",
    )
    return ScalarSolution(Y, Z, diag)


def solve_scalar_euler(spec, i: int, frozen: FrozenInputs, bundle, basis: BasisSpec = BasisSpec(),
                       terminal=None, xi_bound: float | None = None, extra_features=None,
                       measure_bmo: bool = True) -> ScalarSolution:
    """Explicit backward Euler on the quadratic driver (oracle backend).

        Z_k = E[(Y_{k+1} - E[Y_{k+1} | F_k]) dW_k | F_k] / dt_k
        Y_k = E[Y_{k+1} | F_k] + f^i(t_k, ., Z_k) dt_k

    with unweighted regressions and the same fresh/frozen argument split as
    the transform backend.  ``xi_bound`` is accepted for signature parity.
    """
    frozen.check(spec, bundle, i)
    M, N, d = bundle.M, bundle.N, bundle.d
    times, dt = bundle.grid.times, bundle.grid.dt
    xi = _terminal(spec, bundle, i, terminal)

    cum_t = _time_major(bundle.cumulative)
    inc_t = _time_major(bundle.increments)

    Y = np.empty((N + 1, M))
    Z = np.empty((N, M, d))
    f_sum = np.zeros(M)
    Y[N] = xi
    for k in range(N - 1, -1, -1):
        feats = _features(cum_t, k, extra_features)
        target = Y[k + 1]
        proj = Projector(feats, None, basis)
        cond = proj.fitted(target)
        resid = target - cond
        for j in range(d):
            Z[k, :, j] = proj.fitted(resid * inc_t[k, :, j]) / dt[k]
        zlk = _lk_controls(frozen, i, k, own=Z[k])
        y_k = frozen.y_paths[:, k]
        f = 0.5 * np.sum(Z[k] ** 2, axis=1) + np.sum(Z[k] * spec.l_value(i, times[k], y_k, zlk), axis=1)
        f += spec.h_value(i, times[k], y_k, frozen.z_paths[:, k]) - spec.k_value(i, times[k], zlk)
        f_sum += f * dt[k]
        Y[k] = cond + f * dt[k]

    Y = np.ascontiguousarray(Y.T)
    Z = np.ascontiguousarray(np.moveaxis(Z, 0, 1))
    pathwise = xi + f_sum
    y0_se = float(pathwise.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    diag = _norm_diagnostics(Y, Z, bundle, basis, measure_bmo)
    diag.update(min_hatY=float(np.exp(Y.min())), floor_hits=0, y0_stderr=y0_se, backend="euler")
    return ScalarSolution(Y, Z, diag)


BACKENDS = {"colehopf": solve_scalar_colehopf, "euler": solve_scalar_euler}
