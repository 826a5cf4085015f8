"""
Custom exceptions for the FTEM toolkit.
"""

from typing import List, Optional


class FtemError(Exception):
    """Base exception for all toolkit errors."""
    pass


class ParameterError(FtemError):
    """A parameter value violates the model's invariants."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class DomainError(ParameterError):
    """An operation was evaluated outside its mathematical domain."""
    pass


class ConfigurationError(FtemError):
    """Configuration error."""

    def __init__(self, message: str, errors: Optional[List[str]] = None):
        super().__init__(message)
        self.errors = errors or []


class NumericalError(FtemError):
    """A numerical procedure failed to produce a trustworthy answer."""
    pass


class SingularJacobianError(NumericalError):
    """Linearization is undefined at the requested point."""
    pass


class ResidualError(NumericalError):
    """A point handed in as an equilibrium does not satisfy the equations."""

    def __init__(self, message: str, residual: float = None):
        super().__init__(message)
        self.residual = residual


class BifurcationNotFoundError(NumericalError):
    """No bifurcation could be located on the requested range."""

    NO_BIFURCATION = "NO_BIFURCATION"
    NOT_FOUND = "NOT_FOUND"

    def __init__(self, message: str, code: str = NO_BIFURCATION):
        super().__init__(message)
        self.code = code


class IntegrationError(NumericalError):
    """Time integration failed (step-size underflow or solver failure)."""

    def __init__(self, message: str, time: float = None):
        super().__init__(message)
        self.time = time


class StabilityError(NumericalError):
    """A time step is outside the stability limit, or the solution blew up."""

    def __init__(self, message: str, dt: float = None, dt_max: float = None):
        super().__init__(message)
        self.dt = dt
        self.dt_max = dt_max


class OutputError(FtemError):
    """Error writing results to disk."""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path
