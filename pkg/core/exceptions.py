"""Exception hierarchy shared by every package."""

from typing import Any, Optional


class MuskatError(Exception):
    """Base class for all laboratory errors."""


class GridError(MuskatError, ValueError):
    """Invalid grid, state, or state file."""


class ScenarioError(MuskatError, ValueError):
    """Unknown scenario or parameters outside the profile's domain."""


class OperatorDomainError(MuskatError, ValueError):
    """Operator called outside its domain (zero offset, wrong boundary mode, x off span)."""


class QuadratureError(MuskatError, ArithmeticError):
    """Quadrature spec unusable for a grid, or an integral failed to converge."""

    def __init__(self, message: str, integral: Optional[str] = None):
        super().__init__(message)
        self.integral = integral


class ModulusRangeError(MuskatError, ValueError):
    """Modulus evaluated outside its domain or with the wrong family."""


class ConfigError(MuskatError, ValueError):
    """Run configuration is consistent per block but unusable as a whole."""


class BlowUpError(MuskatError):
    """Time integration aborted on non-finite values or step-size collapse."""

    def __init__(self, message: str, state: Any = None, trajectory: Any = None):
        super().__init__(message)
        self.state = state
        self.trajectory = trajectory
