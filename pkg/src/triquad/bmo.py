"""Stochastic exponentials, measure-changed conditional expectations and BMO estimates.

Also houses the constant providers ``delta(gamma)``, ``Delta(gamma)`` (the
two-sided distortion of BMO norms under a Girsanov change of measure with
drift of BMO norm at most ``gamma``) and ``L_p`` (the comparison constant
between BMO_p and BMO_2 norms).  Their exact values are not available in
closed form, so the providers are pluggable; :func:`surrogate_providers` is a
documented stand-in that satisfies the required invariants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ProviderError, WeightOverflowError
from .regress import BasisSpec, Projector

__all__ = [
    "WeightPaths",
    "BmoEstimate",
    "ConstantProviders",
    "surrogate_providers",
    "table_providers",
    "load_table",
    "stochastic_exponential",
    "conditional_weighted",
    "bmo_norm_estimate",
    "u_transform",
]

_LOG_MAX = 700.0


@dataclass(frozen=True, eq=False)
class WeightPaths:
    """Per-path stochastic exponential on the grid; ``log_values[:, 0] == 0``."""

    log_values: np.ndarray
    drift_label: str = ""

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    def ratio(self, k: int, j: int) -> np.ndarray:
        """E_{t_j} / E_{t_k}, computed in log space."""
        return np.exp(self.log_values[:, j] - self.log_values[:, k])


@dataclass(frozen=True, eq=False)
class BmoEstimate:
    value: float
    per_time_profile: np.ndarray
    method: str


def stochastic_exponential(a_paths, bundle, label: str = "") -> WeightPaths:
    """E_{t_{k+1}} = E_{t_k} exp(a_k . dW_k - |a_k|^2 dt_k / 2), E_0 = 1."""
    a = np.asarray(a_paths, dtype=float)
    if a.shape != bundle.increments.shape:
        raise ValueError(f"drift shape {a.shape} does not match increments {bundle.increments.shape}")
    dt = bundle.grid.dt
    inc = np.sum(a * bundle.increments, axis=2) - 0.5 * np.sum(a ** 2, axis=2) * dt[None, :]
    logs = np.zeros((a.shape[0], a.shape[1] + 1))
    np.cumsum(inc, axis=1, out=logs[:, 1:])
    bad = ~np.isfinite(logs) | (np.abs(logs) > _LOG_MAX)
    if bad.any():
        m, k = np.argwhere(bad)[0]
        raise WeightOverflowError(f"stochastic exponential overflow on path {m} at step {k}")
    return WeightPaths(logs, label)


def _features(bundle, k, extra=None):
    f = bundle.cumulative[:, k, :]
    if extra is not None:
        f = np.concatenate([f, np.asarray(extra, dtype=float).reshape(f.shape[0], -1)], axis=1)
    return f


def conditional_weighted(X, weights: WeightPaths | None, k: int, bundle,
                         basis: BasisSpec = BasisSpec(), target_index: int | None = None,
                         extra_features=None) -> np.ndarray:
    """Estimate E^Q[X | F_{t_k}] where dQ/dP = E_T.

    ``X`` must be measurable at ``target_index`` (default: the last grid
    time); the density ratio ``E_{target}/E_{t_k}`` is then used as the
    regression weight.  Returns ``X`` unchanged when ``k`` equals the target
    index.
    """
    X = np.asarray(X, dtype=float)
    j = bundle.N if target_index is None else target_index
    if k == j:
        return X.copy()
    w = None if weights is None else weights.ratio(k, j)
    feats = _features(bundle, k, extra_features)
    return Projector(feats, w, basis).fitted(X)


def bmo_norm_estimate(Z, bundle, basis: BasisSpec = BasisSpec(), weights: WeightPaths | None = None,
                      return_paths: bool = False) -> BmoEstimate:
    """Squared BMO norm of the stochastic integral of ``Z`` (shape (M, N, n, d)).

    For every grid time t_k the remaining quadratic variation
    ``sum_{j >= k} |Z_j|^2 dt_j`` is regressed on time-t_k features; the
    estimate is the max over paths and grid times of the (nonnegative part of
    the) fitted values.  Restricting stopping times to grid times makes this
    biased low.  ``weights`` switches to the measure with density ``E_T``.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.shape[:2] != bundle.increments.shape[:2] or Z.shape[-1] != bundle.d:
        raise ValueError("Z shape does not match bundle")
    dt = bundle.grid.dt
    q = np.sum(Z.reshape(Z.shape[0], Z.shape[1], -1) ** 2, axis=2) * dt[None, :]
    tail = np.zeros((Z.shape[0], Z.shape[1] + 1))
    tail[:, :-1] = np.cumsum(q[:, ::-1], axis=1)[:, ::-1]
    profile = np.zeros(bundle.N + 1)
    for k in range(bundle.N):
        est = conditional_weighted(tail[:, k], weights, k, bundle, basis)
        profile[k] = max(float(est.max()), 0.0)
    value = float(profile.max())
    out = BmoEstimate(value, profile, "regression")
    if return_paths:
        return out, tail
    return out


def u_transform(x):
    """u(x) = e^x - 1 - x with its first two derivatives."""
    x = np.asarray(x, dtype=float)
    if np.any(x > 709.0) or not np.all(np.isfinite(x)):
        raise OverflowError("u_transform argument out of range")
    ex = np.exp(x)
    u = np.expm1(x) - x
    du = np.expm1(x)
    if u.ndim == 0:
        return float(u), float(du), float(ex)
    return u, du, ex


@dataclass(frozen=True, eq=False)
class ConstantProviders:
    """Pluggable ``delta``, ``Delta`` and ``L_p``.

    ``log_delta_fn`` / ``log_Delta_fn`` are used where the plain values would
    under- or overflow (e.g. the delay bound); they default to ``log`` of the
    plain functions.
    """

    delta_fn: Callable[[float], float]
    Delta_fn: Callable[[float], float]
    L_fn: Callable[[float], float]
    name: str = "custom"
    log_delta_fn: Callable[[float], float] | None = None
    log_Delta_fn: Callable[[float], float] | None = None

    def delta(self, gamma: float) -> float:
        return float(self.delta_fn(gamma))

    def Delta(self, gamma: float) -> float:
        return float(self.Delta_fn(gamma))

    def L(self, p: float) -> float:
        return float(self.L_fn(p))

    def log_delta(self, gamma: float) -> float:
        if self.log_delta_fn is not None:
            return float(self.log_delta_fn(gamma))
        v = self.delta(gamma)
        return math.log(v) if v > 0 else -math.inf

    def log_Delta(self, gamma: float) -> float:
        if self.log_Delta_fn is not None:
            return float(self.log_Delta_fn(gamma))
        v = self.Delta(gamma)
        return math.log(v) if v > 0 else -math.inf

    def check(self, gammas=None) -> None:
        """Raise ProviderError unless the invariants hold on a probe grid."""
        gammas = np.linspace(0.0, 20.0, 201) if gammas is None else np.asarray(gammas, dtype=float)
        if not (math.isclose(self.delta(0.0), 1.0, abs_tol=1e-12) and math.isclose(self.Delta(0.0), 1.0, abs_tol=1e-12)):
            raise ProviderError(f"{self.name}: delta(0) and Delta(0) must equal 1")
        dl = np.array([self.log_delta(g) for g in gammas])
        Dl = np.array([self.log_Delta(g) for g in gammas])
        if np.any(np.diff(dl) > 1e-12) or np.any(dl > 1e-12):
            raise ProviderError(f"{self.name}: delta must be nonincreasing and <= 1")
        if np.any(np.diff(Dl) < -1e-12) or np.any(Dl < -1e-12):
            raise ProviderError(f"{self.name}: Delta must be nondecreasing and >= 1")
        for p in (1.0, 2.0, 4.0):
            if not self.L(p) >= 1.0:
                raise ProviderError(f"{self.name}: L_{p:g} must be >= 1")


def _surrogate_L(p):
    return 2.0 * math.gamma(p + 1.0) ** (1.0 / p)


def surrogate_providers() -> ConstantProviders:
    """Stand-in constants: delta = exp(-g(g+2)), Delta = exp(g(g+2)), L_p = 2 (p!)^(1/p).

    These satisfy the normalisation and monotonicity invariants but are not
    the sharp values; override them when better constants are known.
    """

    def log_D(g):
        return g * (g + 2.0)

    def log_d(g):
        return -g * (g + 2.0)

    def safe_exp(v):
        return math.exp(v) if v < 709.0 else math.inf

    return ConstantProviders(
        delta_fn=lambda g: safe_exp(log_d(g)),
        Delta_fn=lambda g: safe_exp(log_D(g)),
        L_fn=_surrogate_L,
        name="surrogate",
        log_delta_fn=log_d,
        log_Delta_fn=log_D,
    )


def load_table(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column whitespace/comma separated (argument, value) table."""
    rows = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ProviderError(f"{path}:{line_no}: expected two columns")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise ProviderError(f"{path}:{line_no}: {exc}") from exc
    if not rows:
        raise ProviderError(f"{path}: empty table")
    arr = np.array(sorted(rows))
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise ProviderError(f"{path}: duplicate arguments")
    return arr[:, 0], arr[:, 1]


def table_providers(delta_table, Delta_table, L_table=None, name: str = "custom-table") -> ConstantProviders:
    """Providers interpolated linearly from tables; held constant beyond the last row.

    Tables are ``(gamma, value)`` arrays or paths to two-column text files.
    ``L_table`` maps ``p`` to ``L_p`` and falls back to the surrogate.
    """

    def as_table(tab):
        if isinstance(tab, (str, Path)):
            return load_table(tab)
        xs, ys = tab
        return np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)

    dx, dy = as_table(delta_table)
    Dx, Dy = as_table(Delta_table)
    if np.any(dy <= 0) or np.any(Dy <= 0):
        raise ProviderError(f"{name}: table values must be positive")
    if L_table is None:
        L_fn = _surrogate_L
    else:
        Lx, Ly = as_table(L_table)
        L_fn = lambda p: float(np.interp(p, Lx, Ly))  # noqa: E731
    prov = ConstantProviders(
        delta_fn=lambda g: float(np.interp(g, dx, dy)),
        Delta_fn=lambda g: float(np.interp(g, Dx, Dy)),
        L_fn=L_fn,
        name=name,
    )
    prov.check(np.unique(np.concatenate([dx, Dx, [0.0]])))
    return prov
