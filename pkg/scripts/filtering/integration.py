"""
Piecewise ODE driver shared by the covariance and moment integrators.

Wraps scipy's adaptive embedded Runge-Kutta solvers: each smooth segment
(between setpoint breakpoints) is solved with dense output, the output grid
is interpolated from it, and an optional jump map is applied to the state
at every breakpoint before the next segment restarts.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from scripts.core.config import (
    ODE_ATOL,
    ODE_METHOD,
    ODE_RTOL,
    STEADY_AGREEMENT,
    STEADY_HORIZON,
    STEADY_TOL,
)
from scripts.core.exceptions import IntegrationError, ValidationError

logger = logging.getLogger(__name__)

RhsFunction = Callable[[float, np.ndarray, float], np.ndarray]
JumpFunction = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class IntegratorSettings:
    """
    Numerical settings for deterministic integration.

    Attributes:
        method: solve_ivp method name
        rtol: Relative tolerance per component
        atol: Absolute tolerance per component
        steady_horizon: Long-time horizon for steady states, in units of 1/gamma
        steady_tol: Accepted max |rhs| at a stationary point, relative to kappa
        steady_agreement: Accepted relative gap between integrated and Newton steady states
    """

    method: str = ODE_METHOD
    rtol: float = ODE_RTOL
    atol: float = ODE_ATOL
    steady_horizon: float = STEADY_HORIZON
    steady_tol: float = STEADY_TOL
    steady_agreement: float = STEADY_AGREEMENT

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValidationError(
                "integrator tolerances must be positive",
                field_name="rtol/atol",
                field_value=(self.rtol, self.atol),
            )
        if self.steady_horizon <= 0:
            raise ValidationError(
                "steady-state horizon must be positive",
                field_name="steady_horizon",
                field_value=self.steady_horizon,
            )


DEFAULT_SETTINGS = IntegratorSettings()


def validate_grid(t_end: float, grid: Sequence[float]) -> np.ndarray:
    """
    Check an output grid against the horizon.

    Args:
        t_end: Final integration time (must be positive)
        grid: Output times, non-decreasing and inside [0, t_end]

    Returns:
        The grid as a float array
    """
    if not np.isfinite(t_end) or t_end <= 0:
        raise ValidationError("t_end must be positive", field_name="t_end", field_value=t_end)
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValidationError("output grid must be a non-empty list of times", field_name="grid")
    if np.any(np.diff(times) < 0):
        raise ValidationError("output grid must be non-decreasing", field_name="grid")
    if times[0] < 0 or times[-1] > t_end:
        raise ValidationError(
            "output grid must lie within [0, t_end]",
            field_name="grid",
            field_value=(float(times[0]), float(times[-1])),
        )
    return times


def uniform_grid(t_end: float, points: int) -> np.ndarray:
    """Evenly spaced output grid from 0 to t_end inclusive."""
    if points < 2:
        raise ValidationError(
            "grid needs at least two points", field_name="points", field_value=points
        )
    return np.linspace(0.0, t_end, points)


def _check_solution(sol, t0: float, label: str, method: str) -> None:
    if sol.status < 0:
        failing_time = float(sol.t[-1]) if sol.t.size else t0
        raise IntegrationError(
            f"{label} integration failed: {sol.message}",
            failing_time=failing_time,
            solver=method,
        )
    finite = np.all(np.isfinite(sol.y), axis=0)
    if not np.all(finite):
        first_bad = int(np.argmin(finite))
        raise IntegrationError(
            f"{label} state became non-finite",
            failing_time=float(sol.t[first_bad]),
            solver=method,
        )


def integrate_piecewise(
    fun: RhsFunction,
    y0: np.ndarray,
    t_end: float,
    grid: np.ndarray,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
    breakpoints: Sequence[float] = (),
    jump: Optional[JumpFunction] = None,
    label: str = "ODE",
) -> tuple[np.ndarray, np.ndarray]:
    """
    Integrate dy/dt = fun(t, y, segment_start) from 0 to t_end across breakpoints.

    Grid points equal to a breakpoint are reported after the jump
    (right-continuous output).

    Args:
        fun: Right-hand side fun(t, y, segment_start), smooth inside each segment
        y0: State at t = 0
        t_end: Final time
        grid: Validated output times
        settings: Integrator settings
        breakpoints: Interior times where the right-hand side is discontinuous
        jump: Optional map applied to the state at each breakpoint
        label: Name used in log and error messages

    Returns:
        Tuple of (output values with shape (len(grid), len(y0)), final state)
    """
    y = np.array(y0, dtype=float)
    output = np.empty((grid.size, y.size))
    edges = [0.0, *[float(b) for b in breakpoints if 0.0 < b < t_end], float(t_end)]

    for k in range(len(edges) - 1):
        t0, t1 = edges[k], edges[k + 1]
        if k > 0 and jump is not None:
            y = jump(t0, y)

        sol = solve_ivp(
            fun,
            (t0, t1),
            y,
            method=settings.method,
            rtol=settings.rtol,
            atol=settings.atol,
            dense_output=True,
            args=(t0,),
        )
        _check_solution(sol, t0, label, settings.method)
        logger.debug(f"{label}: segment [{t0:.6g}, {t1:.6g}] took {sol.t.size - 1} steps")

        last = k == len(edges) - 2
        mask = (grid >= t0) & ((grid <= t1) if last else (grid < t1))
        if np.any(mask):
            output[mask] = sol.sol(grid[mask]).T
        y = sol.y[:, -1].copy()

    return output, y


def integrate_dense(
    fun: RhsFunction,
    y0: np.ndarray,
    t_end: float,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
    label: str = "ODE",
) -> Callable[[np.ndarray], np.ndarray]:
    """
    Integrate one smooth segment from 0 to t_end and keep the dense solution.

    Memory grows with the number of adaptive steps, not with the number of
    points it is later evaluated at.

    Returns:
        Function mapping an array of times in [0, t_end] to values of shape
        (len(times), len(y0))
    """
    if not np.isfinite(t_end) or t_end <= 0:
        raise ValidationError("t_end must be positive", field_name="t_end", field_value=t_end)
    sol = solve_ivp(
        fun,
        (0.0, float(t_end)),
        np.array(y0, dtype=float),
        method=settings.method,
        rtol=settings.rtol,
        atol=settings.atol,
        dense_output=True,
        args=(0.0,),
    )
    _check_solution(sol, 0.0, label, settings.method)
    logger.debug(f"{label}: dense solution to {t_end:.6g} took {sol.t.size - 1} steps")
    dense = sol.sol
    return lambda times: dense(np.asarray(times, dtype=float)).T
