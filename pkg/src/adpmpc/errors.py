"""Exception hierarchy shared across the package."""

from __future__ import annotations


class AdpMpcError(Exception):
    """Base class for every error raised by adpmpc."""


class ConfigError(AdpMpcError):
    """Malformed or inconsistent configuration."""


class DimensionError(AdpMpcError, ValueError):
    """Matrix or vector shapes do not agree."""


class SingularLinearizationError(AdpMpcError):
    """The operating point sits on a singularity of the plant model."""


class SynthesisOverflowError(AdpMpcError):
    """The switching-tree level grew past the configured budget."""


class EmptyRegionError(AdpMpcError):
    """No grid sample fell inside the requested region."""


class ModelMismatchError(AdpMpcError):
    """A Riccati set was synthesized from a different switched model."""


class PlantBlowupError(AdpMpcError):
    """A plant or predictor step produced non-finite values."""


class BudgetExceededError(AdpMpcError):
    """Exhaustive enumeration would exceed the configured budget."""


class UnreachableSetpointError(AdpMpcError):
    """The steady inflow for a setpoint is beyond the pump capacity."""


class InfeasibleError(AdpMpcError):
    """No quantized control keeps the one-step prediction inside X.

    Attributes:
        candidate_index: Index of the least-violating control level.
        u: The least-violating control value.
        violation: Its largest half-space excess.
    """

    def __init__(self, message: str, candidate_index: int, u, violation: float):
        super().__init__(message)
        self.candidate_index = candidate_index
        self.u = u
        self.violation = violation
