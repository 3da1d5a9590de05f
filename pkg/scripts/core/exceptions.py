"""
PidSqueeze exception hierarchy.

The CLI maps ValidationError, ConfigurationError and UnreachableDesignError
to exit code 1 and the numerical failures (IntegrationError,
ConvergenceError, TrajectoryAbortError, InstabilityError) to exit code 2.
"""
from typing import Any, Optional, Sequence


class PidSqueezeError(Exception):
    """
    Base exception for all pidsqueeze errors.

    Subclasses describe their extra fields through `_context()`, which
    `__str__` appends as " | Label: value" parts.
    """

    def __init__(self, message: str, details: Optional[dict[str, Any]] = None):
        self.message = message
        self.details = details or {}
        super().__init__(self.message)

    def _context(self) -> list[str]:
        return []

    def __str__(self) -> str:
        text = self.message
        if self.details:
            text += " (" + ", ".join(f"{k}={v}" for k, v in self.details.items()) + ")"
        return " | ".join([text, *self._context()])


class ValidationError(PidSqueezeError):
    """A physical, feedback or numerical parameter is out of range."""

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
        field_name: Optional[str] = None,
        field_value: Optional[Any] = None,
    ):
        super().__init__(message, details)
        self.field_name = field_name
        self.field_value = field_value

    def _context(self) -> list[str]:
        parts = [f"Field: {self.field_name}"] if self.field_name else []
        if self.field_value is not None:
            parts.append(f"Value: {self.field_value}")
        return parts


class ConfigurationError(PidSqueezeError):
    """A scenario file is missing, unreadable, or holds an unknown key or malformed value."""

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
        config_key: Optional[str] = None,
        config_file: Optional[str] = None,
    ):
        super().__init__(message, details)
        self.config_key = config_key
        self.config_file = config_file

    def _context(self) -> list[str]:
        parts = [f"Key: {self.config_key}"] if self.config_key else []
        if self.config_file:
            parts.append(f"File: {self.config_file}")
        return parts


class IntegrationError(PidSqueezeError):
    """The ODE solver failed (step-size underflow) or the state went non-finite."""

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
        failing_time: Optional[float] = None,
        solver: Optional[str] = None,
    ):
        super().__init__(message, details)
        self.failing_time = failing_time
        self.solver = solver

    def _context(self) -> list[str]:
        parts = [] if self.failing_time is None else [f"t: {self.failing_time:.6g}"]
        if self.solver:
            parts.append(f"Solver: {self.solver}")
        return parts


class ConvergenceError(PidSqueezeError):
    """
    The stationary covariance solve did not converge, or disagrees with
    the long-time integration it was seeded from.
    """

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
        residual_norm: Optional[float] = None,
        iterations: Optional[int] = None,
    ):
        super().__init__(message, details)
        self.residual_norm = residual_norm
        self.iterations = iterations

    def _context(self) -> list[str]:
        parts = [] if self.residual_norm is None else [f"Residual: {self.residual_norm:.3e}"]
        if self.iterations is not None:
            parts.append(f"Evaluations: {self.iterations}")
        return parts


class TrajectoryAbortError(PidSqueezeError):
    """
    A filter trajectory went non-finite, or an ensemble lost more
    trajectories than QS_ABORT_FRACTION allows.
    """

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
        step_index: Optional[int] = None,
        aborted: Optional[int] = None,
        total: Optional[int] = None,
    ):
        super().__init__(message, details)
        self.step_index = step_index
        self.aborted = aborted
        self.total = total

    def _context(self) -> list[str]:
        parts = [] if self.step_index is None else [f"Step: {self.step_index}"]
        if self.aborted is not None and self.total is not None:
            parts.append(f"Aborted: {self.aborted}/{self.total}")
        return parts


class InstabilityError(PidSqueezeError):
    """A final value was requested for a loop with poles in the closed right half-plane."""

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
        poles: Optional[Sequence[complex]] = None,
    ):
        super().__init__(message, details)
        self.poles = list(poles) if poles is not None else []

    def _context(self) -> list[str]:
        if not self.poles:
            return []
        return ["Poles: " + ", ".join(f"{p:.4g}" for p in self.poles)]


class UnreachableDesignError(PidSqueezeError):
    """The requested settling time needs a negative proportional gain."""

    def __init__(
        self,
        message: str,
        details: Optional[dict[str, Any]] = None,
        overshoot: Optional[float] = None,
        settling_time: Optional[float] = None,
    ):
        super().__init__(message, details)
        self.overshoot = overshoot
        self.settling_time = settling_time

    def _context(self) -> list[str]:
        parts = [] if self.overshoot is None else [f"R: {self.overshoot}"]
        if self.settling_time is not None:
            parts.append(f"T_p: {self.settling_time}")
        return parts
