"""Explicit constant chains: a-priori bounds, step sizes, the global bound ODE and the delay bound.

Every function is pure in ``(spec, providers)``.  Quantities that overflow in
double precision are reported as ``inf`` (bounds) or ``0`` (step sizes) rather
than raising; callers that need a usable step size check for that.

Notation used in field names
----------------------------
``Delta_star``, ``delta_star``  providers at gamma = C
``A``, ``B``                    sup bound of Y and BMO bound of Z . W on a short horizon
``eta``                         admissible short horizon for those bounds
``Abar`` .. ``etabar2``         contraction constants and the two extra horizon limits
``K1``, ``K2``                  beta_t = K1 + K2 * int_t^T beta_s ds
``lam``                         beta_0, the uniform bound on |Y| for the global solve
``eta_lambda``                  short horizon evaluated with terminal bound ``lam``
``beta_bar``, ``epsilon0``      delay-equation bound and admissible delay window
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .bmo import ConstantProviders, surrogate_providers

__all__ = [
    "LocalConstants",
    "ContractionConstants",
    "BetaODE",
    "ConstantsReport",
    "local_constants",
    "contraction_constants",
    "beta_ode",
    "epsilon0",
    "log_epsilon0",
    "eta_for_bound",
    "compute_constants",
]

UNITS = {
    "Delta_star": "dimensionless", "delta_star": "dimensionless",
    "A": "value", "B": "sqrt(time)", "eta": "time",
    "Abar": "dimensionless", "Bbar": "dimensionless", "Cbar": "dimensionless",
    "etabar1": "time", "etabar2": "time",
    "K1": "value", "K2": "1/time", "lam": "value", "eta_lambda": "time",
    "beta_bar": "value", "Delta_tilde": "dimensionless", "delta_tilde": "dimensionless",
    "epsilon0": "time",
}

NOTES = (
    "beta-ODE prefactor (1-alpha)/(8(1-alpha)) evaluated literally as 1/8",
    "undefined Delta_i in the component bounds read as Delta_star",
)


def _exp(x: float) -> float:
    return math.exp(x) if x < 709.0 else math.inf


def _pow(base: float, e: float) -> float:
    try:
        return base ** e
    except OverflowError:
        return math.inf


def _div(a: float, b: float) -> float:
    if b == 0:
        return math.inf if a > 0 else 0.0
    return a / b


def _inv(x: float) -> float:
    if x == 0:
        return math.inf
    return 0.0 if math.isinf(x) else 1.0 / x


@dataclass(frozen=True)
class LocalConstants:
    Delta_star: float
    delta_star: float
    A: float
    B: float
    eta: float


@dataclass(frozen=True)
class ContractionConstants:
    Delta_bar: float
    delta_bar: float
    Abar: float
    Bbar: float
    Cbar: float
    etabar1: float
    etabar2: float
    contraction_sum: float


@dataclass(frozen=True)
class BetaODE:
    K1: float
    K2: float
    lam: float
    horizon: float
    ode_check: float

    def beta(self, t):
        """Closed form beta_t = K1 exp(K2 (T - t))."""
        t = np.asarray(t, dtype=float)
        with np.errstate(over="ignore"):
            return self.K1 * np.exp(self.K2 * (self.horizon - t))


def _resolve(providers):
    prov = providers if providers is not None else surrogate_providers()
    prov.check()
    return prov


def local_constants(spec, providers: ConstantProviders | None = None, xi_bound: float | None = None) -> LocalConstants:
    """A, B, eta for the short-horizon bounds, with Delta_star = Delta(C), delta_star = delta(C)."""
    prov = _resolve(providers)
    n, C, a = spec.n, spec.lipschitz_C, spec.alpha
    xi = spec.xi_bound if xi_bound is None else float(xi_bound)
    if xi < 0:
        raise ValueError("xi bound must be nonnegative")
    Ds, ds = prov.Delta(C), prov.delta(C)
    r = _div(2.0 * C * Ds, ds) if C > 0 else 0.0
    P = (1.0 + 2.0 * C) * _exp(xi) + xi
    geo = 1.0 + _pow(r, n)
    ca = _pow(C, (1 + a) / (1 - a))
    coupling = _div(2.0 * n ** 3 * C * Ds, ds) * geo * P if C > 0 else 0.0
    A = n * (xi + 2.0 + C + ca / 2.0 + coupling)
    B2 = _div(2.0 * n ** 3, ds) * geo * P
    B = math.sqrt(B2)
    e = (1 + a) / (1 - a)
    second = _inv((1 - a) * _pow((1 + a) * Ds * B2, e))
    eta = min(_inv((2.0 + A) ** 2), second)
    return LocalConstants(Ds, ds, A, B, eta)


def contraction_constants(spec, providers: ConstantProviders | None = None, B: float | None = None,
                    horizon: float | None = None, xi_bound: float | None = None) -> ContractionConstants:
    """Contraction constants on a horizon ``horizon`` (default: the problem horizon)."""
    prov = _resolve(providers)
    if B is None:
        B = local_constants(spec, prov, xi_bound).B
    n, C, ap = spec.n, spec.lipschitz_C, spec.alpha_plus
    T = spec.horizon if horizon is None else float(horizon)
    g = math.sqrt(2.0) * C + 2.0 * math.sqrt(2.0) * B
    Db, db = prov.Delta(g), prov.delta(g)
    L4 = prov.L(4.0)
    B2 = B * B
    C2 = C * C
    Abar = 12.0 * C2 * T * (1.0 + Db * B2) if C > 0 else 0.0
    # alpha_+ = 0 removes the last term exactly, also when Db overflowed.
    tail = 2.0 * ap * L4 * Db * B2 if ap > 0 else 0.0
    Bbar = 18.0 * C2 * L4 ** 2 * Db ** 2 * T ** (1 - ap) * (3.0 + tail) if C > 0 else 0.0
    Cbar = 6.0 * n * C2 * Db ** 2 * (2.0 * B2 + 3.0 * L4 ** 2 * (3.0 + 2.0 * L4 * Db * B2)) if C > 0 else 0.0
    S = n + _div(Cbar * n ** 4 + n ** 3, db) * (1.0 + _pow(_div(Cbar, db), n))
    if C > 0:
        etabar1 = _inv(24.0 * C2 * (1.0 + Db * B2) * S)
        etabar2 = _pow(_inv(36.0 * C2 * L4 ** 2 * Db ** 2 * (3.0 + tail) * S), 1.0 / (1.0 - ap))
    else:
        etabar1 = etabar2 = math.inf
    return ContractionConstants(Db, db, Abar, Bbar, Cbar, etabar1, etabar2, S * max(Abar, Bbar))


def _beta_coefficients(spec, xi_bound=None):
    n, C, a, T = spec.n, spec.lipschitz_C, spec.alpha, spec.horizon
    xi = spec.xi_bound if xi_bound is None else float(xi_bound)
    e = _exp(xi)
    Q = 1.0 + 4.0 * n * n * (1.0 + _pow(4.0 * C * e, n))
    K1 = n + n * Q * (e + xi + (C * C * e * e + 2.0 * C * e) * T)
    K1 += _pow(4.0 * (1.0 + a) * n * C * e * Q, 2.0 / (1.0 - a)) * T / 8.0
    K2 = n * C * e * Q
    return K1, K2


def beta_ode(spec, xi_bound: float | None = None, check_points: int = 1000) -> BetaODE:
    """Coefficients of the linear bound ODE, its closed form and a numeric cross-check.

    ``ode_check`` is the max abs deviation between the closed form and an
    adaptive high-order integration of beta' = -K2 beta, beta_T = K1 on
    ``check_points`` grid points (0 disables the check).
    """
    K1, K2 = _beta_coefficients(spec, xi_bound)
    T = spec.horizon
    lam = K1 * _exp(K2 * T)
    out = BetaODE(K1, K2, lam, T, 0.0)
    if check_points and math.isfinite(lam):
        out = BetaODE(K1, K2, lam, T, beta_ode_deviation(out, check_points))
    return out


def beta_ode_deviation(b: BetaODE, points: int = 1000) -> float:
    ts = np.linspace(b.horizon, 0.0, points)
    sol = solve_ivp(lambda t, y: -b.K2 * y, (b.horizon, 0.0), [b.K1], method="DOP853",
                    t_eval=ts, rtol=2.3e-14, atol=1e-14)
    return float(np.max(np.abs(sol.y[0] - b.beta(ts))))


def log_epsilon0(spec, providers: ConstantProviders | None = None) -> float:
    """log of the admissible delay window; +inf when C = 0."""
    prov = _resolve(providers)
    n, C, T = spec.n, spec.lipschitz_C, spec.horizon
    if C == 0:
        return math.inf
    K1, _ = _beta_coefficients(spec)
    g = C * math.sqrt(2.0 * T) + 16.0 * math.sqrt(2.0) * K1
    ld, lD = prov.log_delta(g), prov.log_Delta(g)
    dt_ = _exp(ld)
    Dd = _exp(lD + ld)
    denom = 2.0 * math.e * dt_ * T + 2.0 * math.e * Dd * K1 + 1.0
    return ld - math.log(4.0 * n * C * C) - math.log(denom)


def epsilon0(spec, providers: ConstantProviders | None = None) -> float:
    """Admissible delay window (may underflow to 0.0; see :func:`log_epsilon0`)."""
    le = log_epsilon0(spec, providers)
    return math.inf if math.isinf(le) and le > 0 else math.exp(le) if le > -745 else 0.0


def eta_for_bound(spec, providers: ConstantProviders | None = None, xi_bound_override: float = 0.0) -> float:
    if xi_bound_override < 0:
        raise ValueError("override must be nonnegative")
    return local_constants(spec, providers, xi_bound_override).eta


@dataclass(frozen=True)
class ConstantsReport:
    Delta_star: float
    delta_star: float
    A: float
    B: float
    eta: float
    Abar: float
    Bbar: float
    Cbar: float
    etabar1: float
    etabar2: float
    K1: float
    K2: float
    lam: float
    eta_lambda: float
    beta_bar: float
    Delta_tilde: float
    delta_tilde: float
    epsilon0: float
    log_epsilon0: float
    beta_ode_check: float
    provider_name: str

    @property
    def eta_local(self) -> float:
        """Horizon under which both the bounds and the contraction hold."""
        return min(self.eta, self.etabar1, self.etabar2)

    def to_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if isinstance(val, float) and not math.isfinite(val):
                val = "inf" if val > 0 else "-inf" if val < 0 else "nan"
            out[key] = val
        out["lambda"] = out.pop("lam")
        units = dict(UNITS)
        units["lambda"] = units.pop("lam")
        out["units"] = units
        out["notes"] = list(NOTES)
        return out


def compute_constants(spec, providers: ConstantProviders | None = None) -> ConstantsReport:
    prov = _resolve(providers)
    loc = local_constants(spec, prov)
    con = contraction_constants(spec, prov, loc.B)
    beta = beta_ode(spec)
    eta_lam = local_constants(spec, prov, beta.lam).eta if math.isfinite(beta.lam) else 0.0
    C, T = spec.lipschitz_C, spec.horizon
    g = C * math.sqrt(2.0 * T) + 16.0 * math.sqrt(2.0) * beta.K1
    le = log_epsilon0(spec, prov)
    return ConstantsReport(
        Delta_star=loc.Delta_star, delta_star=loc.delta_star, A=loc.A, B=loc.B, eta=loc.eta,
        Abar=con.Abar, Bbar=con.Bbar, Cbar=con.Cbar, etabar1=con.etabar1, etabar2=con.etabar2,
        K1=beta.K1, K2=beta.K2, lam=beta.lam, eta_lambda=eta_lam,
        beta_bar=beta.K1, Delta_tilde=prov.Delta(g), delta_tilde=prov.delta(g),
        epsilon0=epsilon0(spec, prov), log_epsilon0=le, beta_ode_check=beta.ode_check,
        provider_name=prov.name,
    )
