"""Exception types shared across the package.

Every error carries enough context for the CLI to map it onto an exit code.
"""

from __future__ import annotations


class DivctlError(Exception):
    """Base class for all package errors."""


class RangeError(DivctlError, ValueError):
    """A primitive input lies outside its admissible range."""

    def __init__(self, field: str, value, reason: str = "out of range"):
        self.field = field
        self.value = value
        super().__init__(f"{field}={value!r}: {reason}")


class InconsistentGross(DivctlError, ValueError):
    """Adjusted drift does not equal loading times gross drift."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(message)


class DegenerateRegime(DivctlError, ArithmeticError):
    """A reinsurance crossover level is undefined (zero denominator)."""


class DomainError(DivctlError, ValueError):
    """A function was evaluated outside the set where it is defined."""


class BracketError(DivctlError, RuntimeError):
    """Root bracket endpoints do not straddle zero."""


class Unsupported(DivctlError, ValueError):
    """Inputs are valid but outside what the closed-form solver handles."""


class InternalOrderingError(DivctlError, RuntimeError):
    """Switching points came out in an order the solution forbids."""


class PreconditionError(DivctlError, ValueError):
    """A caller-side precondition does not hold."""


class ConfigError(DivctlError, ValueError):
    """A run or simulation configuration is invalid."""


SOLVER_ERRORS = (
    DegenerateRegime,
    DomainError,
    BracketError,
    Unsupported,
    InternalOrderingError,
)


class SimConfigError(ConfigError):
    """Simulation settings violate a discretization or sampling invariant."""
