"""Exception hierarchy.

The CLI maps these onto exit codes (see :mod:`triquad.cli`), so every
failure that can surface from a solve should derive from :class:`TriquadError`.
"""

from __future__ import annotations


class TriquadError(Exception):
    """Base class for all library errors."""


class SpecError(TriquadError, ValueError):
    """A problem definition violates a structural rule (dimensions, ranges, triangularity)."""


class ConfigError(TriquadError):
    """Configuration text failed validation.

    ``errors`` holds ``(key_path, message)`` pairs, one per problem found.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.errors]
        super().__init__("; ".join(lines))


class ProviderError(TriquadError, ValueError):
    """A constant provider breaks the monotonicity/normalisation invariants."""


class TerminalBoundError(TriquadError):
    """A terminal sample exceeded its declared sup bound."""


class SingularFitError(TriquadError, ArithmeticError):
    """Least-squares normal equations stayed singular after ridge escalation."""


class WeightOverflowError(TriquadError, OverflowError):
    """A stochastic exponential left the representable range."""


class NonPositiveTransformError(TriquadError, ArithmeticError):
    """The exponential transform produced too many non-positive nodes."""


class HypothesisError(TriquadError):
    """Assumption or hypothesis check failed; ``report`` carries the details."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class EpsilonTooLargeError(HypothesisError):
    """Requested delay window exceeds the admissible bound."""


class DegenerateHorizonError(TriquadError):
    """The stitching step size underflowed or needs too many intervals."""


class ConvergenceError(TriquadError):
    """Fixed-point iteration hit its iteration cap; ``report`` carries the history."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BoundBreachError(TriquadError):
    """A measured solution norm exceeded its a-priori bound beyond tolerance."""

    def __init__(self, message, interval=None, report=None):
        super().__init__(message)
        self.interval = interval
        self.report = report
