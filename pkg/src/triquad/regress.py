"""Weighted least-squares estimation of conditional expectations.

Features are standardised (weighted mean 0, weighted std 1) before the
polynomial expansion, and every basis column except the intercept is
weighted-centred.  The intercept is then exactly the weighted mean of the
targets, so the ridge penalty only shrinks the slope block.  Coefficients
returned in :class:`RegressionModel` refer to this internal basis.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import SingularFitError

logger = logging.getLogger(__name__)

__all__ = ["BasisSpec", "RegressionModel", "Projector", "fit_conditional", "predict"]

_CHUNK = 8192
_COND_LIMIT = 1e12
_MAX_ESCALATIONS = 4


@dataclass(frozen=True)
class BasisSpec:
    """Polynomial basis of total ``degree`` in the supplied features.

    ``ridge=None`` selects the automatic regulariser
    ``1e-8 * trace(normal matrix) / p``.  ``kind`` is informational: with
    ``"polynomial_with_functionals"`` the caller appends path-functional values
    as extra feature columns.
    """

    degree: int = 2
    ridge: float | None = None
    kind: str = "polynomial"
    functionals: tuple = ()

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("degree must be >= 0")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be >= 0")
        if self.kind not in ("polynomial", "polynomial_with_functionals"):
            raise ValueError(f"unknown basis kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class RegressionModel:
    coefficients: np.ndarray
    basis: BasisSpec
    condition_estimate: float
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    kept: np.ndarray
    exponents: tuple
    column_mean: np.ndarray
    ridge_used: float = 0.0
    n_features: int = field(default=0)

    def scaled(self, factor: float) -> "RegressionModel":
        """Same model with coefficients multiplied by ``factor``."""
        return RegressionModel(
            self.coefficients * factor, self.basis, self.condition_estimate, self.feature_mean,
            self.feature_scale, self.kept, self.exponents, self.column_mean, self.ridge_used, self.n_features,
        )


def _exponents(p: int, degree: int) -> tuple:
    out = []
    for deg in range(1, degree + 1):
        out.extend(itertools.combinations_with_replacement(range(p), deg))
    return tuple(out)


def _expand(xs: np.ndarray, exponents: tuple) -> np.ndarray:
    cols = np.empty((xs.shape[0], len(exponents)))
    for c, combo in enumerate(exponents):
        col = xs[:, combo[0]].copy()
        for j in combo[1:]:
            col *= xs[:, j]
        cols[:, c] = col
    return cols


def _gram(phi: np.ndarray, w: np.ndarray) -> np.ndarray:
    # Fixed chunk order keeps the reduction deterministic.
    q = phi.shape[1]
    G = np.zeros((q, q))
    for lo in range(0, phi.shape[0], _CHUNK):
        ph = phi[lo:lo + _CHUNK]
        G += ph.T @ (ph * w[lo:lo + _CHUNK, None])
    return G


def _rhs(phi: np.ndarray, w: np.ndarray, r: np.ndarray) -> np.ndarray:
    b = np.zeros(phi.shape[1])
    for lo in range(0, phi.shape[0], _CHUNK):
        b += phi[lo:lo + _CHUNK].T @ (w[lo:lo + _CHUNK] * r[lo:lo + _CHUNK])
    return b


class Projector:
    """Weighted least-squares projection onto a fixed design.

    Standardisation, basis expansion, the normal matrix and its ridge are set
    up once from ``features`` and ``weights``; :meth:`fitted` and
    :meth:`model` then project any number of targets on the same rows.

    Raises
    ------
    SingularFitError
        If the normal matrix stays ill-conditioned after ridge escalation, or
        there are too few rows for the basis.
    """

    def __init__(self, features, weights=None, basis: BasisSpec = BasisSpec()):
        X = np.asarray(features, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        m, p = X.shape
        if weights is None:
            w = np.ones(m)
        else:
            w = np.asarray(weights, dtype=float)
            if w.shape != (m,) or np.any(w < 0) or not np.any(w > 0):
                raise ValueError("weights must be nonnegative, one per row, not all zero")
        self.basis = basis
        self.m, self.p = m, p
        self.w = w
        self.wn = w / w.sum()

        mean = self.wn @ X
        centred = X - mean
        scale = np.sqrt(self.wn @ centred ** 2)
        kept = scale > 1e-12 * (1.0 + np.abs(mean))
        safe_scale = np.where(kept, scale, 1.0)
        self.mean, self.scale, self.kept = mean, safe_scale, kept
        self.exponents = _exponents(int(kept.sum()), basis.degree)
        q = len(self.exponents)
        self.q = q
        self.cond = 1.0
        self.ridge = 0.0
        self.col_mean = np.zeros(q)
        self.phi = None
        self.too_few = False
        if q == 0:
            return
        if m <= q + 1:
            self.too_few = True
            return
        phi = _expand((centred / safe_scale)[:, kept], self.exponents)
        self.col_mean = self.wn @ phi
        phi -= self.col_mean
        self.phi = phi
        G = _gram(phi, w)
        trace = float(np.trace(G))
        ridge = 1e-8 * trace / q if basis.ridge is None else float(basis.ridge)
        for attempt in range(_MAX_ESCALATIONS + 1):
            A = G + ridge * np.eye(q)
            cond = float(np.linalg.cond(A))
            if np.isfinite(cond) and cond <= _COND_LIMIT:
                break
            if attempt == _MAX_ESCALATIONS:
                raise SingularFitError(f"normal equations singular after ridge escalation (condition {cond:.3g})")
            ridge = max(ridge * 100.0, 1e-10 * max(trace, 1.0) / q)
            logger.debug("escalating ridge to %.3g", ridge)
        self.A = A
        self.cond = max(cond, 1.0)
        self.ridge = ridge

    def _solve(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.m,):
            raise ValueError("targets must have one entry per feature row")
        if np.all(y == y[0]):
            # Constant targets are reproduced exactly.
            return float(y[0]), np.zeros(self.q)
        intercept = float(self.wn @ y)
        if self.q == 0:
            return intercept, np.zeros(0)
        if self.too_few:
            raise SingularFitError(f"{self.m} rows cannot determine {self.q + 1} coefficients")
        b = _rhs(self.phi, self.w, y - intercept)
        return intercept, np.linalg.solve(self.A, b)

    def fitted(self, y) -> np.ndarray:
        """Fitted values of ``y`` on the design rows."""
        intercept, slopes = self._solve(y)
        if self.phi is None or not slopes.any():
            return np.full(self.m, intercept)
        return intercept + self.phi @ slopes

    def model(self, y) -> RegressionModel:
        intercept, slopes = self._solve(y)
        coefs = np.concatenate([[intercept], slopes])
        return RegressionModel(coefs, self.basis, self.cond, self.mean, self.scale, self.kept,
                               self.exponents, self.col_mean, self.ridge, self.p)


def fit_conditional(features, targets, weights=None, basis: BasisSpec = BasisSpec()) -> RegressionModel:
    """Fit ``targets ~ basis(features)`` minimising the weighted squared residual plus ridge.

    Parameters
    ----------
    features : (M, p) array
    targets : (M,) array
    weights : (M,) nonnegative array or None for unit weights
    basis : BasisSpec

    Raises
    ------
    SingularFitError
        If the normal matrix stays ill-conditioned after ridge escalation.
    """
    return Projector(features, weights, basis).model(targets)


def predict(model: RegressionModel, features) -> np.ndarray:
    """Evaluate the fitted expansion on new feature rows."""
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.n_features:
        raise ValueError(f"model expects {model.n_features} features, got {X.shape[1]}")
    c = model.coefficients
    out = np.full(X.shape[0], c[0])
    if len(model.exponents) == 0:
        return out
    xs = ((X - model.feature_mean) / model.feature_scale)[:, model.kept]
    phi = _expand(xs, model.exponents) - model.column_mean
    return out + phi @ c[1:]
