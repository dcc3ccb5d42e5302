"""
Exceptions raised by cptdual.

Every error subclasses the builtin matching its meaning, so callers that only
know ``ValueError``/``RuntimeError`` keep working.
"""
from typing import Optional


class CptdualError(Exception):
    """Mixin shared by every cptdual exception."""


class ConfigurationError(CptdualError, ValueError):
    """Shapes, dimensions or option values that cannot be used."""


class TreeValidationError(ConfigurationError):
    """A scenario tree violates its structural invariants."""


class SpecificationError(CptdualError, ValueError):
    """A CPT specification violates a boundary, envelope or monotonicity requirement."""


class DomainError(CptdualError, ValueError):
    """Parameters outside the domain of an operation."""


class OracleDomainError(DomainError):
    """The brute-force integration window does not cover the integrand."""


class DensitySupportError(DomainError):
    """A joint density is not positive (or not supported) where it is evaluated."""


class ArbitrageError(DomainError):
    """The market admits an arbitrage, so no martingale measure can be constructed."""

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class GateRefusal(DomainError):
    """The optimizer was asked to run on parameters that are not known to be well posed."""

    def __init__(self, message: str, verdict=None):
        super().__init__(message)
        self.verdict = verdict


class ConvergenceError(CptdualError, RuntimeError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message: str, gradient_norm: Optional[float] = None, iterations: Optional[int] = None):
        super().__init__(message)
        self.gradient_norm = gradient_norm
        self.iterations = iterations
