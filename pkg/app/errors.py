"""
Error hierarchy for the scatterer toolkit.

Every failure the services raise derives from SebaError so the CLI and the
pipeline graph can tell computation problems (exit 1) from usage problems
(exit 2) without inspecting messages.
"""

from typing import Optional


class SebaError(Exception):
    """Base class for toolkit failures."""

    exit_code = 1


class UsageError(SebaError):
    """Bad configuration, bad flags or unreadable input files."""

    exit_code = 2


class SchemaVersionError(UsageError):
    """A spectrum file declares a schema or version this build cannot read."""

    def __init__(self, path: str, found: str, expected: str):
        super().__init__(f"{path}: schema '{found}' is not supported (expected '{expected}')")
        self.path = path
        self.found = found
        self.expected = expected


class DomainError(SebaError):
    """An argument lies outside the mathematical domain of an operation."""


class RangeError(SebaError):
    """A request reaches beyond the range a spectrum was computed for."""

    def __init__(self, message: str, required: Optional[float] = None):
        super().__init__(message)
        self.required = required


class CapacityError(SebaError):
    """An enumeration or oracle would exceed its configured budget."""

    def __init__(self, message: str, required: Optional[float] = None):
        super().__init__(message)
        self.required = required


class PoleProximityError(SebaError):
    """The secular function was evaluated on top of one of its poles."""

    def __init__(self, index: int, pole: float, lam: float):
        super().__init__(f"lambda={lam!r} is within the pole guard of n_{index}={pole!r}")
        self.index = index
        self.pole = pole
        self.lam = lam


class DegenerateGapError(SebaError):
    """Two consecutive norms are too close for a guarded root solve."""

    def __init__(self, gap: int, width: float):
        super().__init__(f"gap {gap} has width {width!r}, below four pole guards")
        self.gap = gap
        self.width = width


class BracketFailureError(SebaError):
    """No sign change of F - rhs was found where one must exist."""

    def __init__(self, message: str, gap: Optional[int] = None, value: Optional[float] = None):
        super().__init__(message)
        self.gap = gap
        self.value = value


class InterlacingError(SebaError):
    """A solved spectrum violates strict interlacing with the norms."""

    def __init__(self, index: int):
        super().__init__(f"interlacing violated at index {index}")
        self.index = index


class QuadratureError(SebaError):
    """Adaptive quadrature did not reach its tolerance."""

    def __init__(self, message: str, interval: Optional[tuple] = None):
        super().__init__(message)
        self.interval = interval


class AdmissibilityError(SebaError):
    """The contour line violates the condition that keeps the logarithm single valued."""


class ConsistencyError(SebaError):
    """Two inputs that must describe the same torus do not."""


class SampleSizeError(SebaError):
    """Too few levels for a stable statistic."""
