"""Problem definition for triangularly quadratic BSDE systems.

Component ``i`` (1-based) of the system has driver

    f^i(t, y, z) = 1/2 |z^i|^2 + z^i . l^i(t, y, z) - k^i(t, z) + h^i(t, y, z)

with ``k^1`` absent.  ``l^i`` and ``k^i`` may only read the control rows
``z^1 .. z^{i-1}``; this is what makes the system solvable one component at a
time.

Generator parts come from a closed registry of parametric families so that a
problem can be written to and read back from a config file.  Library users may
also pass :class:`CallbackGenerator` objects; those are checked by probing
only (:func:`validate_assumptions`).

All array-valued evaluation is vectorised over a leading path axis:
``y`` has shape ``(M, n)`` and ``z`` has shape ``(M, n, d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import SpecError

__all__ = [
    "GENERATOR_FAMILIES",
    "TERMINAL_KINDS",
    "GeneratorDescriptor",
    "CallbackGenerator",
    "TerminalPart",
    "TerminalDescriptor",
    "ProblemSpec",
    "AssumptionCheck",
    "ValidationReport",
    "evaluate_driver",
    "validate_assumptions",
]

GENERATOR_FAMILIES = (
    "zero",
    "constant",
    "linear_y",
    "bounded_sine",
    "z_power",
    "z_block_quadratic",
)

TERMINAL_KINDS = ("constant", "clamped_affine", "tanh", "running_max")

# Allowed parameter names per family; anything else is rejected at construction.
_FAMILY_PARAMS = {
    "zero": {"direction"},
    "constant": {"value", "direction"},
    "linear_y": {"row", "offset", "direction"},
    "bounded_sine": {"amplitude", "frequency", "row", "offset", "direction"},
    "z_power": {"coefficient", "exponent", "rows", "offset", "direction"},
    "z_block_quadratic": {"weights", "direction"},
}
_FAMILY_REQUIRED = {
    "constant": {"value"},
    "linear_y": {"row"},
    "bounded_sine": {"amplitude", "frequency"},
    "z_power": {"coefficient"},
    "z_block_quadratic": {"weights"},
}


def _freeze(value):
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(_freeze(v) for v in value)
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


@dataclass(frozen=True)
class GeneratorDescriptor:
    """One registry generator part.

    Scalar families produce a value per path.  When used as an ``l`` part the
    scalar profile is multiplied by ``params["direction"]`` (a vector in R^d,
    default the first unit vector) to give the drift vector.

    Families
    --------
    zero
        Identically 0.
    constant
        ``value``.
    linear_y
        ``row . y + offset`` clamped to magnitude ``C (1 + |y|)``.
    bounded_sine
        ``offset + amplitude * sin(frequency * row . y)``; ``row`` defaults to ones.
    z_power
        ``offset + coefficient * ((1 + |z_R|^2)^(e/2) - 1)`` where ``z_R`` are the
        selected 1-based ``rows`` (default all) and ``e`` is ``exponent``
        (default ``1 + alpha``).  The smoothing at 0 keeps the part Lipschitz
        for negative alpha while staying below ``|coefficient| |z_R|^e``.
    z_block_quadratic
        ``sum_j weights[j] |z^{j+1}|^2``; weights must be nonnegative.
    """

    family: str = "zero"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in GENERATOR_FAMILIES:
            raise SpecError(f"unknown generator family {self.family!r}")
        params = {k: _freeze(v) for k, v in dict(self.params).items()}
        unknown = set(params) - _FAMILY_PARAMS[self.family]
        if unknown:
            raise SpecError(f"{self.family}: unknown parameter(s) {sorted(unknown)}")
        missing = _FAMILY_REQUIRED.get(self.family, set()) - set(params)
        if missing:
            raise SpecError(f"{self.family}: missing parameter(s) {sorted(missing)}")
        if self.family == "z_block_quadratic":
            if any(w < 0 for w in params["weights"]):
                raise SpecError("z_block_quadratic weights must be nonnegative")
        if self.family == "z_power" and "rows" in params:
            if any(int(r) < 1 for r in params["rows"]):
                raise SpecError("z_power rows are 1-based")
        object.__setattr__(self, "params", params)

    def to_dict(self) -> dict:
        out = {"family": self.family}
        for key in sorted(self.params):
            val = self.params[key]
            out[key] = list(val) if isinstance(val, tuple) else val
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GeneratorDescriptor":
        data = dict(data)
        family = data.pop("family", "zero")
        return cls(family, data)

    @property
    def reads_y(self) -> bool:
        return self.family in ("linear_y", "bounded_sine")

    def z_rows(self, n: int) -> frozenset:
        """1-based control rows this part reads."""
        if self.family == "z_power":
            rows = self.params.get("rows")
            return frozenset(int(r) for r in rows) if rows is not None else frozenset(range(1, n + 1))
        if self.family == "z_block_quadratic":
            return frozenset(j + 1 for j, w in enumerate(self.params["weights"]))
        return frozenset()

    def direction(self, d: int) -> np.ndarray:
        vec = self.params.get("direction")
        if vec is None:
            out = np.zeros(d)
            out[0] = 1.0
            return out
        out = np.asarray(vec, dtype=float)
        if out.shape != (d,):
            raise SpecError(f"direction must have length d={d}")
        return out

    def scalar(self, t, y: np.ndarray, z: np.ndarray, C: float, alpha: float) -> np.ndarray:
        p = self.params
        m = y.shape[0]
        fam = self.family
        if fam == "zero":
            return np.zeros(m)
        if fam == "constant":
            return np.full(m, float(p["value"]))
        if fam == "linear_y":
            v = y @ np.asarray(p["row"], dtype=float) + float(p.get("offset", 0.0))
            cap = C * (1.0 + np.linalg.norm(y, axis=1))
            return np.clip(v, -cap, cap)
        if fam == "bounded_sine":
            row = p.get("row")
            row = np.ones(y.shape[1]) if row is None else np.asarray(row, dtype=float)
            return float(p.get("offset", 0.0)) + float(p["amplitude"]) * np.sin(float(p["frequency"]) * (y @ row))
        if fam == "z_power":
            rows = sorted(self.z_rows(z.shape[1]))
            sq = np.sum(z[:, [r - 1 for r in rows], :] ** 2, axis=(1, 2)) if rows else np.zeros(m)
            e = float(p.get("exponent", 1.0 + alpha))
            return float(p.get("offset", 0.0)) + float(p["coefficient"]) * ((1.0 + sq) ** (0.5 * e) - 1.0)
        # z_block_quadratic
        w = np.asarray(p["weights"], dtype=float)
        k = len(w)
        if k == 0:
            return np.zeros(m)
        return np.sum(z[:, :k, :] ** 2, axis=2) @ w

    # Metadata used by the global-hypothesis checks.  ``None`` = unknown.
    def sup_abs(self, C: float):
        """Upper bound on |scalar profile| if the family is bounded, else None."""
        p = self.params
        if self.family == "zero":
            return 0.0
        if self.family == "constant":
            return abs(float(p["value"]))
        if self.family == "bounded_sine":
            return abs(float(p.get("offset", 0.0))) + abs(float(p["amplitude"]))
        return None

    def is_nonpositive(self):
        p = self.params
        if self.family == "zero":
            return True
        if self.family == "constant":
            return float(p["value"]) <= 0.0
        if self.family == "bounded_sine":
            return float(p.get("offset", 0.0)) + abs(float(p["amplitude"])) <= 0.0
        if self.family == "z_power":
            return float(p["coefficient"]) <= 0.0 and float(p.get("offset", 0.0)) <= 0.0
        if self.family == "z_block_quadratic":
            return all(w == 0 for w in p["weights"])
        return False


@dataclass(frozen=True, eq=False)
class CallbackGenerator:
    """User-supplied generator part (library use only; not serialisable).

    ``fn(t, y, z)`` receives ``y`` of shape ``(M, n)`` and ``z`` of shape
    ``(M, n, d)``; ``t`` may be a scalar or an ``(M,)`` array.  It returns an
    ``(M,)`` array, or ``(M, d)`` when used as an ``l`` part.
    ``z_rows`` declares which 1-based control rows are read (``None`` means
    undeclared; triangularity is then left to probing).
    """

    fn: Callable
    name: str = "callback"
    reads_y: bool = True
    declared_z_rows: frozenset | None = None

    family = "callback"
    params: Mapping[str, Any] = field(default_factory=dict)

    def z_rows(self, n):
        return frozenset() if self.declared_z_rows is None else frozenset(self.declared_z_rows)

    def scalar(self, t, y, z, C, alpha):
        return np.asarray(self.fn(t, y, z), dtype=float)

    def sup_abs(self, C):
        return None

    def is_nonpositive(self):
        return None

    def to_dict(self):
        raise SpecError("callback generators cannot be serialised")


@dataclass(frozen=True)
class TerminalPart:
    """Terminal value of one component.

    kinds: ``constant(value)``, ``clamped_affine(intercept, slope, bound)``
    = clamp(intercept + slope . W_T, +-bound), ``tanh(intercept, slope, scale)``
    = scale * tanh(intercept + slope . W_T), ``running_max(coordinate, bound)``
    = clamp(max_k W^coordinate_{t_k}, +-bound) with a 1-based coordinate.
    """

    kind: str = "constant"
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TERMINAL_KINDS:
            raise SpecError(f"unknown terminal kind {self.kind!r}")
        params = {k: _freeze(v) for k, v in dict(self.params).items()}
        allowed = {
            "constant": {"value"},
            "clamped_affine": {"intercept", "slope", "bound"},
            "tanh": {"intercept", "slope", "scale"},
            "running_max": {"coordinate", "bound"},
        }[self.kind]
        unknown = set(params) - allowed
        if unknown:
            raise SpecError(f"terminal {self.kind}: unknown parameter(s) {sorted(unknown)}")
        if self.kind in ("clamped_affine", "running_max"):
            if "bound" not in params or not float(params["bound"]) >= 0:
                raise SpecError(f"terminal {self.kind}: needs a nonnegative 'bound'")
        object.__setattr__(self, "params", params)

    @property
    def bound(self) -> float:
        p = self.params
        if self.kind == "constant":
            return abs(float(p.get("value", 0.0)))
        if self.kind == "tanh":
            return abs(float(p.get("scale", 1.0)))
        return float(p["bound"])

    def _slope(self, d):
        s = self.params.get("slope")
        if s is None:
            s = np.zeros(d)
            s[0] = 1.0
            return s
        s = np.asarray(s, dtype=float)
        if s.shape != (d,):
            raise SpecError(f"terminal slope must have length d={d}")
        return s

    def evaluate(self, cumulative: np.ndarray) -> np.ndarray:
        """``cumulative`` is the ``(M, N+1, d)`` Brownian path array."""
        p = self.params
        m, _, d = cumulative.shape
        wT = cumulative[:, -1, :]
        if self.kind == "constant":
            return np.full(m, float(p.get("value", 0.0)))
        if self.kind == "clamped_affine":
            b = float(p["bound"])
            return np.clip(float(p.get("intercept", 0.0)) + wT @ self._slope(d), -b, b)
        if self.kind == "tanh":
            return float(p.get("scale", 1.0)) * np.tanh(float(p.get("intercept", 0.0)) + wT @ self._slope(d))
        j = int(p.get("coordinate", 1)) - 1
        if not 0 <= j < d:
            raise SpecError(f"running_max coordinate out of range 1..{d}")
        b = float(p["bound"])
        return np.clip(cumulative[:, :, j].max(axis=1), -b, b)

    def to_dict(self):
        out = {"kind": self.kind}
        for key in sorted(self.params):
            val = self.params[key]
            out[key] = list(val) if isinstance(val, tuple) else val
        return out


@dataclass(frozen=True)
class TerminalDescriptor:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def bound(self) -> float:
        """Declared ||xi||_inf, Euclidean over components."""
        return math.sqrt(sum(p.bound ** 2 for p in self.parts))

    def evaluate(self, cumulative):
        return np.stack([p.evaluate(cumulative) for p in self.parts], axis=1)


def _as_descriptor(part):
    if isinstance(part, (GeneratorDescriptor, CallbackGenerator)):
        return part
    if isinstance(part, Mapping):
        return GeneratorDescriptor.from_dict(part)
    if callable(part):
        return CallbackGenerator(part)
    raise SpecError(f"cannot interpret generator part {part!r}")


@dataclass(frozen=True)
class ProblemSpec:
    """Dimensions, horizon, constants, terminal condition and generator parts.

    ``k_parts`` holds the parts for components 2..n (so it is empty for n = 1).
    Parts may be descriptors, plain dicts (``{"family": ..., **params}``) or
    callables; they are normalised on construction.
    """

    n: int
    d: int
    horizon: float
    lipschitz_C: float
    alpha: float
    terminal: TerminalDescriptor
    l_parts: tuple = ()
    k_parts: tuple = ()
    h_parts: tuple = ()

    def __post_init__(self):
        n, d = self.n, self.d
        if not (isinstance(n, (int, np.integer)) and n >= 1):
            raise SpecError("n must be a positive integer")
        if not (isinstance(d, (int, np.integer)) and d >= 1):
            raise SpecError("d must be a positive integer")
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise SpecError("horizon must be positive")
        if not (math.isfinite(self.lipschitz_C) and self.lipschitz_C >= 0):
            raise SpecError("lipschitz_C must be nonnegative")
        if not (-1.0 <= self.alpha < 1.0):
            raise SpecError("alpha must lie in [-1, 1)")
        terminal = self.terminal
        if not isinstance(terminal, TerminalDescriptor):
            terminal = TerminalDescriptor(tuple(terminal))
        if len(terminal.parts) != n:
            raise SpecError(f"terminal must have {n} parts")
        object.__setattr__(self, "terminal", terminal)

        l_parts = tuple(_as_descriptor(p) for p in (self.l_parts or [{}] * n))
        h_parts = tuple(_as_descriptor(p) for p in (self.h_parts or [{}] * n))
        k_parts = tuple(_as_descriptor(p) for p in (self.k_parts or [{}] * (n - 1)))
        if len(l_parts) != n:
            raise SpecError(f"l_parts must have {n} entries")
        if len(h_parts) != n:
            raise SpecError(f"h_parts must have {n} entries")
        if len(k_parts) != n - 1:
            raise SpecError(f"k_parts must have n-1 = {n - 1} entries")
        for i, part in enumerate(l_parts, start=1):
            rows = part.z_rows(n)
            if rows and max(rows) >= i:
                raise SpecError(f"l[{i}] may only read control rows 1..{i - 1}, got {sorted(rows)}")
            if isinstance(part, GeneratorDescriptor):
                part.direction(d)
        for i, part in enumerate(k_parts, start=2):
            rows = part.z_rows(n)
            if rows and max(rows) >= i:
                raise SpecError(f"k[{i}] may only read control rows 1..{i - 1}, got {sorted(rows)}")
        for i, part in enumerate(h_parts, start=1):
            rows = part.z_rows(n)
            if rows and max(rows) > n:
                raise SpecError(f"h[{i}] reads control row beyond n={n}")
        for parts in (l_parts, k_parts, h_parts):
            for part in parts:
                row = part.params.get("row")
                if row is not None and len(row) != n:
                    raise SpecError(f"{part.family}: row must have length n={n}")
        object.__setattr__(self, "l_parts", l_parts)
        object.__setattr__(self, "h_parts", h_parts)
        object.__setattr__(self, "k_parts", k_parts)

    @property
    def alpha_plus(self) -> float:
        return max(self.alpha, 0.0)

    @property
    def xi_bound(self) -> float:
        return self.terminal.bound

    @property
    def global_flags(self) -> dict:
        """Registry-metadata view of the extra global hypotheses (None = unknown)."""
        C = self.lipschitz_C

        def l_bounded(part):
            s = part.sup_abs(C)
            if s is None:
                return None
            scale = np.linalg.norm(part.direction(self.d)) if isinstance(part, GeneratorDescriptor) else 1.0
            return s * scale <= C
        h_flags = [p.is_nonpositive() for p in self.h_parts]
        l_flags = [l_bounded(p) for p in self.l_parts]

        def combine(flags):
            if any(f is False for f in flags):
                return False
            if any(f is None for f in flags):
                return None
            return True
        return {"h_nonpositive": combine(h_flags), "l_bounded": combine(l_flags)}

    @property
    def reads_y(self) -> list:
        """Per component: whether l^i or h^i reads the value argument."""
        return [self.l_parts[i].reads_y or self.h_parts[i].reads_y for i in range(self.n)]

    def has_k(self) -> bool:
        return any(not (isinstance(p, GeneratorDescriptor) and p.family == "zero") for p in self.k_parts)

    def _check_index(self, i):
        if not (1 <= i <= self.n):
            raise IndexError(f"component index {i} outside 1..{self.n}")

    def l_value(self, i, t, y, z):
        """Drift vector l^i, shape (M, d)."""
        self._check_index(i)
        part = self.l_parts[i - 1]
        out = part.scalar(t, y, z, self.lipschitz_C, self.alpha)
        if isinstance(part, CallbackGenerator):
            out = np.asarray(out, dtype=float)
            return out if out.ndim == 2 else out[:, None] * np.eye(1, self.d)[0]
        return out[:, None] * part.direction(self.d)[None, :]

    def k_value(self, i, t, z):
        self._check_index(i)
        if i == 1:
            return np.zeros(z.shape[0])
        part = self.k_parts[i - 2]
        return part.scalar(t, np.zeros((z.shape[0], self.n)), z, self.lipschitz_C, self.alpha)

    def h_value(self, i, t, y, z):
        self._check_index(i)
        return self.h_parts[i - 1].scalar(t, y, z, self.lipschitz_C, self.alpha)

    def driver(self, i, t, y, z):
        """Vectorised driver f^i over paths."""
        zi = z[:, i - 1, :]
        val = 0.5 * np.sum(zi ** 2, axis=1) + np.sum(zi * self.l_value(i, t, y, z), axis=1)
        return val - self.k_value(i, t, z) + self.h_value(i, t, y, z)

    def to_dict(self) -> dict:
        return {
            "n": int(self.n),
            "d": int(self.d),
            "horizon": float(self.horizon),
            "lipschitz_C": float(self.lipschitz_C),
            "alpha": float(self.alpha),
            "terminal": [p.to_dict() for p in self.terminal.parts],
            "l": [p.to_dict() for p in self.l_parts],
            "k": [p.to_dict() for p in self.k_parts],
            "h": [p.to_dict() for p in self.h_parts],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ProblemSpec":
        def terminal_part(item):
            item = dict(item)
            return TerminalPart(item.pop("kind"), item)

        return cls(
            int(data["n"]), int(data["d"]), float(data["horizon"]), float(data["lipschitz_C"]),
            float(data.get("alpha", 0.0)), [terminal_part(t) for t in data["terminal"]],
            tuple(data.get("l", ())), tuple(data.get("k", ())), tuple(data.get("h", ())),
        )


def evaluate_driver(spec: ProblemSpec, i: int, t: float, y, z) -> float:
    """Driver of component ``i`` at a single point ``(t, y, z)``.

    ``y`` has shape ``(n,)`` and ``z`` shape ``(n, d)``.
    """
    if not (1 <= i <= spec.n):
        raise IndexError(f"component index {i} outside 1..{spec.n}")
    y = np.asarray(y, dtype=float).reshape(1, spec.n)
    z = np.asarray(z, dtype=float).reshape(1, spec.n, spec.d)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(z)) and math.isfinite(t)):
        raise ValueError("non-finite driver input")
    return float(spec.driver(i, t, y, z)[0])


@dataclass(frozen=True)
class AssumptionCheck:
    assumption_id: str
    probes_run: int
    worst_violation: float
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    probe_seed: int
    tolerance: float = 1e-9

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, assumption_id: str) -> AssumptionCheck:
        for c in self.checks:
            if c.assumption_id == assumption_id:
                return c
        raise KeyError(assumption_id)

    def to_dict(self):
        return {
            "passed": self.passed,
            "probe_seed": self.probe_seed,
            "tolerance": self.tolerance,
            "checks": [
                {
                    "assumption_id": c.assumption_id,
                    "probes_run": c.probes_run,
                    "worst_violation": c.worst_violation,
                    "pass": c.passed,
                    "detail": c.detail,
                }
                for c in self.checks
            ],
        }


def _excess(lhs, rhs):
    """Bound excess, normalised by (1 + rhs) so roundoff on large values stays small."""
    return np.maximum(lhs - rhs, 0.0) / (1.0 + np.abs(rhs))


def _probe_points(spec: ProblemSpec, m: int, rng: np.random.Generator):
    n, d = spec.n, spec.d
    t = rng.uniform(0.0, spec.horizon, size=m)
    scale = 10.0 ** rng.uniform(-1.0, 2.0, size=(m, 1))
    y = scale * rng.standard_normal((m, n))
    z = scale[:, :, None] * rng.standard_normal((m, n, d))
    pscale = 10.0 ** rng.uniform(-3.0, 1.0, size=(m, 1))
    yb = y + pscale * rng.standard_normal((m, n))
    zb = z + pscale[:, :, None] * rng.standard_normal((m, n, d))
    return t, y, z, yb, zb


def validate_assumptions(spec: ProblemSpec, probes: int = 1000, seed: int = 0,
                         tolerance: float = 1e-9) -> ValidationReport:
    """Probe the growth, Lipschitz and triangularity conditions A1-A4.

    Violations are measured as ``max(lhs - rhs, 0) / (1 + |rhs|)`` and a check
    passes when the worst one is at most ``tolerance``.  Triangularity is
    checked by redrawing control rows ``j >= i`` and requiring bit-identical
    ``l^i`` / ``k^i`` values.  Nothing is raised; the report says what failed.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    C, a, ap = spec.lipschitz_C, spec.alpha, spec.alpha_plus
    t, y, z, yb, zb = _probe_points(spec, probes, rng)
    ynorm = np.linalg.norm(y, axis=1)
    dy = np.linalg.norm(y - yb, axis=1)
    znorm = np.sqrt(np.sum(z ** 2, axis=(1, 2)))
    zbnorm = np.sqrt(np.sum(zb ** 2, axis=(1, 2)))
    dz = np.sqrt(np.sum((z - zb) ** 2, axis=(1, 2)))
    row_norm = np.linalg.norm(z, axis=2)
    rowb_norm = np.linalg.norm(zb, axis=2)
    drow = np.linalg.norm(z - zb, axis=2)

    worst = {"A1": 0.0, "A2": 0.0, "A3": 0.0, "A4": 0.0}
    details = {key: [] for key in worst}

    def record(key, values, what, comp):
        v = np.nan_to_num(np.asarray(values, dtype=float), nan=np.inf)
        if v.size and v.max() > worst[key]:
            worst[key] = float(v.max())
        if v.size and v.max() > tolerance:
            details[key].append(f"{what}[{comp}]")

    def shuffled_upper(i):
        # rows i..n (1-based) redrawn, rows < i untouched
        zz = z.copy()
        zz[:, i - 1:, :] = 10.0 * rng.standard_normal(zz[:, i - 1:, :].shape)
        return zz

    for i in range(1, spec.n + 1):
        key = "A1" if i == 1 else "A2"
        lv = spec.l_value(i, t, y, z)
        lvb = spec.l_value(i, t, yb, zb)
        lnorm = np.linalg.norm(lv, axis=1)
        record(key, _excess(lnorm, C * (1 + ynorm)), "l growth", i)
        lower_dz = drow[:, : i - 1].sum(axis=1)
        lip_rhs = C * dy + C * lower_dz
        record(key, _excess(np.linalg.norm(lv - lvb, axis=1), lip_rhs), "l lipschitz", i)
        zz = shuffled_upper(i)
        lv_shift = spec.l_value(i, t, y, zz)
        record(key, np.linalg.norm(lv_shift - lv, axis=1) / (1 + lnorm), "l triangularity", i)

        if i >= 2:
            kv = spec.k_value(i, t, z)
            kvb = spec.k_value(i, t, zb)
            record("A3", np.maximum(-kv, 0.0), "k sign", i)
            sq = np.sum(row_norm[:, : i - 1] ** 2, axis=1)
            record("A3", _excess(kv, C * (1 + sq)), "k growth", i)
            lip = C * np.sum((1 + row_norm[:, : i - 1] + rowb_norm[:, : i - 1]) * drow[:, : i - 1], axis=1)
            record("A3", _excess(np.abs(kv - kvb), lip), "k lipschitz", i)
            kv_shift = spec.k_value(i, t, zz)
            record("A3", np.abs(kv_shift - kv) / (1 + np.abs(kv)), "k triangularity", i)

        hv = spec.h_value(i, t, y, z)
        hvb = spec.h_value(i, t, yb, zb)
        record("A4", _excess(np.abs(hv), C * (1 + ynorm + znorm ** (1 + a))), "h growth", i)
        lip = C * dy + C * (1 + znorm ** ap + zbnorm ** ap) * dz
        record("A4", _excess(np.abs(hv - hvb), lip), "h lipschitz", i)

    ids = ["A1", "A2", "A3", "A4"] if spec.n >= 2 else ["A1", "A4"]
    checks = tuple(
        AssumptionCheck(k, probes, worst[k], worst[k] <= tolerance, ", ".join(details[k]))
        for k in ids
    )
    return ValidationReport(checks, seed, tolerance)
