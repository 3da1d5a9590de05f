"""
Conditional covariance dynamics of the quantum Kalman filter.

The ten covariances of (Q, P, X_a, Y_a) obey a closed, deterministic
Riccati system that does not depend on the measurement record. Only the
derivative gain enters it: proportional and integral feedback apply known
forces and cannot change the estimate uncertainty.
"""
import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import optimize

from scripts.core.exceptions import ConvergenceError
from scripts.core.model import (
    ZERO_POINT_VARIANCE,
    CovarianceState,
    InitialState,
    SystemParams,
    validate_alpha_d,
)
from scripts.filtering.integration import (
    DEFAULT_SETTINGS,
    IntegratorSettings,
    integrate_dense,
    integrate_piecewise,
    validate_grid,
)

logger = logging.getLogger(__name__)

COVARIANCE_FIELDS = CovarianceState.field_names()

# Component indices in the packed state vector
V_Q, V_QP, V_P, V_XA, V_XAYA, V_YA, V_XAQ, V_XAP, V_YAQ, V_YAP = range(10)


def covariance_derivative(v: np.ndarray, params: SystemParams, alpha_d: float) -> np.ndarray:
    """
    Packed right-hand side of the covariance equations.

    Args:
        v: Covariances in CovarianceState field order, shape (10,) or (10, n)
        params: System parameters
        alpha_d: Derivative gain (1 + alpha_d > 0, not re-checked here)

    Returns:
        Time derivatives with the same shape as v
    """
    kappa, gamma, g = params.kappa, params.gamma, params.g
    n = params.thermal_variance
    a = 1.0 + alpha_d
    squeeze = (1.0 + 2.0 * alpha_d) / a**2
    cross = (1.0 + 2.0 * alpha_d) / a
    half_rate = 0.5 * (kappa + gamma)

    v_q, v_qp, v_p, v_xa, v_xaya, v_ya, v_xaq, v_xap, v_yaq, v_yap = v
    ya_excess = v_ya - ZERO_POINT_VARIANCE

    return np.array(
        [
            -gamma * (v_q - n) - 2.0 * kappa * squeeze * v_yaq**2,
            g * v_xaq - gamma * v_qp - 2.0 * kappa * cross * v_yaq * v_yap,
            2.0 * g * v_xap - gamma * (v_p - n) - 2.0 * kappa * v_yap**2,
            -kappa * (v_xa - ZERO_POINT_VARIANCE) - 2.0 * kappa * v_xaya**2,
            g * v_xaq - kappa * v_xaya - 2.0 * kappa * v_xaya * ya_excess,
            2.0 * g * v_yaq - kappa * ya_excess - 2.0 * kappa * ya_excess**2,
            -half_rate * v_xaq - 2.0 * kappa * cross * v_xaya * v_yaq,
            g * v_xa - half_rate * v_xap - 2.0 * kappa * v_xaya * v_yap,
            g * v_q
            - half_rate * v_yaq
            - 2.0 * kappa / a * ya_excess * v_yaq
            - 2.0 * kappa * alpha_d / a * v_yaq**2,
            g * (v_xaya + v_qp) - half_rate * v_yap - 2.0 * kappa * v_yap * ya_excess,
        ]
    )


def covariance_rhs(state: CovarianceState, params: SystemParams, alpha_d: float) -> CovarianceState:
    """
    Time derivative of the conditional covariances.

    Args:
        state: Current covariances
        params: System parameters
        alpha_d: Derivative gain

    Returns:
        The ten derivatives packed as a CovarianceState
    """
    validate_alpha_d(alpha_d)
    return CovarianceState.from_array(covariance_derivative(state.as_array(), params, alpha_d))


@dataclass(frozen=True)
class CovarianceSeries:
    """Covariances sampled on an output grid; values has shape (len(times), 10)."""

    times: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return self.times.size

    def __getitem__(self, index: int) -> CovarianceState:
        return CovarianceState.from_array(self.values[index])

    @property
    def final(self) -> CovarianceState:
        return self[-1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, COVARIANCE_FIELDS.index(name)]

    def as_state(self) -> CovarianceState:
        """View of the whole series as a CovarianceState of arrays."""
        return CovarianceState.from_array(self.values.T)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(COVARIANCE_FIELDS))
        frame.insert(0, "t", self.times)
        return frame


def integrate_covariances(
    init: InitialState,
    params: SystemParams,
    alpha_d: float,
    t_end: float,
    output_grid: Sequence[float],
    settings: IntegratorSettings = DEFAULT_SETTINGS,
) -> CovarianceSeries:
    """
    Integrate the covariance equations from the initial preset.

    Args:
        init: Initial state (only its covariance preset is used)
        params: System parameters
        alpha_d: Derivative gain
        t_end: Final time
        output_grid: Output times within [0, t_end]
        settings: Integrator settings

    Returns:
        CovarianceSeries on the output grid

    Raises:
        ValidationError: On invalid alpha_d or grid
        IntegrationError: On step-size underflow or non-finite state
    """
    validate_alpha_d(alpha_d)
    grid = validate_grid(t_end, output_grid)

    logger.info(
        f"Integrating covariances to t={t_end:.6g} (n_BA={params.n_ba:.4g}, alpha_d={alpha_d})"
    )
    values, _ = integrate_piecewise(
        lambda t, y, _start: covariance_derivative(y, params, alpha_d),
        init.covariances(params).as_array(),
        t_end,
        grid,
        settings,
        label="covariance",
    )
    return CovarianceSeries(times=grid, values=values)


def covariance_interpolant(
    init: InitialState,
    params: SystemParams,
    alpha_d: float,
    t_end: float,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
) -> Callable[[np.ndarray], np.ndarray]:
    """
    Dense covariance solution on [0, t_end].

    Evaluating it at a grid gives the same values as integrate_covariances
    on that grid, without storing the grid.

    Returns:
        Function mapping times to covariance rows of shape (len(times), 10)
    """
    validate_alpha_d(alpha_d)
    return integrate_dense(
        lambda t, y, _start: covariance_derivative(y, params, alpha_d),
        init.covariances(params).as_array(),
        t_end,
        settings,
        label="covariance",
    )


def steady_state_covariances(
    params: SystemParams,
    alpha_d: float,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
    init: Optional[InitialState] = None,
) -> CovarianceState:
    """
    Stationary conditional covariances.

    Integrates from the preset (thermal by default) over the steady-state
    horizon, then refines the end point with a hybrid Newton solve of the
    algebraic system. Seeding from the integration keeps the solve on the
    physical branch of the Riccati equation.

    Raises:
        ConvergenceError: If the residual stays above tolerance or the two
            estimates disagree
    """
    validate_alpha_d(alpha_d)
    init = init or InitialState(preset="thermal")
    horizon = settings.steady_horizon / params.gamma

    _, seed = integrate_piecewise(
        lambda t, y, _start: covariance_derivative(y, params, alpha_d),
        init.covariances(params).as_array(),
        horizon,
        np.array([horizon]),
        settings,
        label="steady covariance",
    )

    result = optimize.root(
        lambda y: covariance_derivative(y, params, alpha_d),
        seed,
        method="hybr",
        options={"xtol": 1e-13},
    )
    refined = result.x
    residual = float(np.max(np.abs(covariance_derivative(refined, params, alpha_d))))
    tolerance = settings.steady_tol * params.kappa

    if not np.all(np.isfinite(refined)) or residual > tolerance:
        raise ConvergenceError(
            "steady-state covariance solve did not converge",
            details={"message": result.message},
            residual_norm=residual,
            iterations=int(result.nfev),
        )

    gap = np.abs(refined - seed)
    allowed = settings.steady_agreement * np.abs(seed) + 10.0 * settings.atol
    if np.any(gap > allowed):
        worst = COVARIANCE_FIELDS[int(np.argmax(gap - allowed))]
        raise ConvergenceError(
            "integrated and algebraic steady states disagree",
            details={"component": worst, "gap": float(np.max(gap))},
            residual_norm=residual,
            iterations=int(result.nfev),
        )

    logger.info(f"Steady covariances found: residual={residual:.2e}, nfev={result.nfev}")
    return CovarianceState.from_array(refined)
