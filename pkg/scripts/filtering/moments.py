"""
Ensemble-averaged moment dynamics under PID feedback.

Averaging the filter equations over measurement records gives a closed set
of ODEs for the means of the estimates, four quadratic moments and the
memory kernel sigma = int_0^t <pi_t(Q) pi_t'(Q)> dt' that the integral
action couples in. The moments are co-integrated with the covariances in a
single 23-component state; the unconditional variance is the conditional
covariance plus the excess noise s - m^2.
"""
import logging
from dataclasses import dataclass, fields
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from scripts.core.exceptions import ValidationError
from scripts.core.model import (
    CovarianceState,
    ExternalForce,
    InitialState,
    PidParams,
    SystemParams,
)
from scripts.filtering.covariance import CovarianceSeries, covariance_derivative
from scripts.filtering.integration import (
    DEFAULT_SETTINGS,
    IntegratorSettings,
    integrate_piecewise,
    validate_grid,
)

logger = logging.getLogger(__name__)

N_COV = 10


@dataclass(frozen=True)
class MomentState:
    """
    Averages over measurement records of the filtered estimates.

    m_* are means <pi_t(.)>, s_* second moments, sigma the integral memory
    kernel with its time derivative, and aux_* running integrals of the
    mean, the setpoint and the tracking error.
    """

    m_q: float = 0.0
    m_p: float = 0.0
    m_xa: float = 0.0
    m_ya: float = 0.0
    s_qq: float = 0.0
    s_pp: float = 0.0
    s_xaxa: float = 0.0
    s_xap: float = 0.0
    sigma: float = 0.0
    sigma_dot: float = 0.0
    aux_int_mq: float = 0.0
    aux_int_r: float = 0.0
    aux_int_err: float = 0.0

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "MomentState":
        values = np.asarray(values, dtype=float)
        if values.shape[0] != len(MOMENT_FIELDS):
            raise ValidationError(
                "moment state needs thirteen components",
                field_name="values",
                field_value=values.shape[0],
            )
        return cls(*(values[i] if values.ndim > 1 else float(values[i]) for i in range(13)))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in MOMENT_FIELDS], dtype=float)

    @classmethod
    def initial(cls, init: InitialState) -> "MomentState":
        """Deterministic start: second moments are squares of the initial estimates."""
        return cls(
            m_q=init.q,
            m_p=init.p,
            m_xa=init.xa,
            m_ya=init.ya,
            s_qq=init.q**2,
            s_pp=init.p**2,
            s_xaxa=init.xa**2,
            s_xap=init.xa * init.p,
            sigma_dot=init.q**2,
        )


MOMENT_FIELDS = tuple(f.name for f in fields(MomentState))

M_Q, M_P, M_XA, M_YA, S_QQ, S_PP, S_XAXA, S_XAP = range(8)
SIGMA, SIGMA_DOT, INT_MQ, INT_R, INT_ERR = range(8, 13)


def moment_derivative(
    m: np.ndarray,
    v: np.ndarray,
    params: SystemParams,
    pid: PidParams,
    force: ExternalForce,
    r: float,
) -> np.ndarray:
    """
    Packed right-hand side of the moment equations at constant setpoint r.

    Args:
        m: Moments in MomentState field order
        v: Covariances in CovarianceState field order at the same time
        params: System parameters
        pid: Feedback gains
        force: External force
        r: Setpoint value on the current segment

    Returns:
        Thirteen time derivatives
    """
    kappa, gamma, g = params.kappa, params.gamma, params.g
    a = pid.derivative_factor
    kp = pid.alpha_p * gamma / 2.0
    ki = pid.alpha_i * gamma**2 / 4.0
    damping = (1.0 + pid.alpha_p) * gamma / 2.0
    half_f1 = force.f1 / 2.0
    v_xaya, v_yaq, v_yap = v[4], v[8], v[9]

    m_q, m_p, m_xa, m_ya = m[M_Q], m[M_P], m[M_XA], m[M_YA]
    s_qq, s_xaxa, s_xap = m[S_QQ], m[S_XAXA], m[S_XAP]
    sigma, sigma_dot = m[SIGMA], m[SIGMA_DOT]
    int_mq, int_r, int_err = m[INT_MQ], m[INT_R], m[INT_ERR]

    d_q = (-gamma / 2.0 * m_q + kp * (pid.mu * r - m_q) + ki * int_err - half_f1) / a
    feedback_q = (
        -damping * s_qq + kp * pid.mu * r * m_q + ki * (int_r * m_q - sigma) - half_f1 * m_q
    )
    d_sqq = 2.0 / a * feedback_q + 2.0 * kappa * v_yaq**2 / a**2
    d_sigma_dot = d_sqq + (
        (kp * pid.mu * r + ki * int_r - half_f1) * m_q
        + ki * r * int_mq
        - damping * sigma_dot
        - 2.0 * ki * sigma
    ) / a

    return np.array(
        [
            d_q,
            g * m_xa - gamma / 2.0 * m_p + force.f2 / 2.0,
            -kappa / 2.0 * m_xa,
            g * m_q - kappa / 2.0 * m_ya,
            d_sqq,
            2.0 * g * s_xap - gamma * m[S_PP] + force.f2 * m_p + 2.0 * kappa * v_yap**2,
            -kappa * s_xaxa + 2.0 * kappa * v_xaya**2,
            g * s_xaxa
            - 0.5 * (kappa + gamma) * s_xap
            + force.f2 / 2.0 * m_xa
            + 2.0 * kappa * v_xaya * v_yap,
            sigma_dot,
            d_sigma_dot,
            m_q,
            r,
            r - m_q,
        ]
    )


def moment_rhs(
    state: MomentState,
    cov: Optional[CovarianceState],
    params: SystemParams,
    pid: PidParams,
    force: Optional[ExternalForce],
    t: float,
) -> MomentState:
    """
    Time derivative of the moments at time t.

    Inside a setpoint segment dr/dt = 0; the impulse at a breakpoint is
    applied by run_moments as a jump of sigma_dot.

    Raises:
        ValidationError: If no covariance sample is supplied
    """
    if cov is None:
        raise ValidationError("moment derivative needs the covariances at t", field_name="cov")
    force = force or ExternalForce()
    return MomentState.from_array(
        moment_derivative(
            state.as_array(), cov.as_array(), params, pid, force, pid.setpoint.value(t)
        )
    )


def unconditional_variance(cov: CovarianceState, mom: MomentState) -> tuple[float, float]:
    """Unconditional (V_Q, V_P): conditional covariance plus excess noise."""
    vq = cov.v_q + (mom.s_qq - mom.m_q**2)
    vp = cov.v_p + (mom.s_pp - mom.m_p**2)
    return vq, vp


def stationary_excess_noise(
    cov: CovarianceState, params: SystemParams, pid: PidParams
) -> tuple[float, float]:
    """
    Closed-form stationary excess noise for zero setpoint and no force.

    With zero means the quadratic moments decouple from the linear ones and
    sigma relaxes to zero whenever alpha_i > 0, so the integral gain drops
    out of the stationary Q excess.

    Args:
        cov: Stationary conditional covariances
        params: System parameters
        pid: Feedback gains

    Returns:
        Tuple of (excess_q, excess_p)
    """
    kappa, gamma, g = params.kappa, params.gamma, params.g
    a = pid.derivative_factor
    excess_q = 2.0 * kappa * cov.v_yaq**2 / (a * (1.0 + pid.alpha_p) * gamma)
    s_xaxa = 2.0 * cov.v_xaya**2
    s_xap = (g * s_xaxa + 2.0 * kappa * cov.v_xaya * cov.v_yap) / (0.5 * (kappa + gamma))
    excess_p = (2.0 * g * s_xap + 2.0 * kappa * cov.v_yap**2) / gamma
    return excess_q, excess_p


@dataclass(frozen=True)
class MomentSeries:
    """Moments and the co-integrated covariances on an output grid."""

    times: np.ndarray
    covariances: CovarianceSeries
    values: np.ndarray

    def __len__(self) -> int:
        return self.times.size

    def __getitem__(self, index: int) -> MomentState:
        return MomentState.from_array(self.values[index])

    @property
    def final(self) -> MomentState:
        return self[-1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, MOMENT_FIELDS.index(name)]

    def excess_noise(self) -> tuple[np.ndarray, np.ndarray]:
        """Excess noise (s_qq - m_q^2, s_pp - m_p^2) at every output time."""
        m_q, m_p = self.column("m_q"), self.column("m_p")
        return self.column("s_qq") - m_q**2, self.column("s_pp") - m_p**2

    def unconditional_variances(self) -> tuple[np.ndarray, np.ndarray]:
        excess_q, excess_p = self.excess_noise()
        return (
            self.covariances.column("v_q") + excess_q,
            self.covariances.column("v_p") + excess_p,
        )

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.values, columns=list(MOMENT_FIELDS))
        frame.insert(0, "t", self.times)
        return frame


def run_moments(
    init: InitialState,
    params: SystemParams,
    pid: PidParams,
    force: Optional[ExternalForce],
    t_end: float,
    grid: Sequence[float],
    settings: IntegratorSettings = DEFAULT_SETTINGS,
) -> MomentSeries:
    """
    Co-integrate covariances and moments from t = 0 to t_end.

    Setpoint breakpoints split the integration; at each one sigma_dot jumps
    by alpha_p gamma mu dr int<pi(Q)> / (2 (1 + alpha_d)), the integrated
    impulse of the dr/dt term.

    Args:
        init: Initial estimates and covariance preset
        params: System parameters
        pid: Feedback gains and setpoint
        force: External force (None for no force)
        t_end: Final time
        grid: Output times within [0, t_end]
        settings: Integrator settings

    Returns:
        MomentSeries on the output grid

    Raises:
        ValidationError: On invalid grid
        IntegrationError: On step-size underflow or non-finite state
    """
    times = validate_grid(t_end, grid)
    force = force or ExternalForce()
    setpoint = pid.setpoint
    jump_gain = pid.alpha_p * params.gamma / 2.0 * pid.mu / pid.derivative_factor

    def rhs(t: float, y: np.ndarray, segment_start: float) -> np.ndarray:
        v, m = y[:N_COV], y[N_COV:]
        return np.concatenate(
            (
                covariance_derivative(v, params, pid.alpha_d),
                moment_derivative(m, v, params, pid, force, setpoint.value(segment_start)),
            )
        )

    def jump(t: float, y: np.ndarray) -> np.ndarray:
        y = y.copy()
        y[N_COV + SIGMA_DOT] += jump_gain * setpoint.jump(t) * y[N_COV + INT_MQ]
        return y

    y0 = np.concatenate(
        (init.covariances(params).as_array(), MomentState.initial(init).as_array())
    )
    breakpoints = setpoint.breakpoints(t_end)
    logger.info(
        f"Integrating moments to t={t_end:.6g} across {len(breakpoints)} setpoint breakpoint(s)"
    )
    values, _ = integrate_piecewise(
        rhs, y0, t_end, times, settings, breakpoints=breakpoints, jump=jump, label="moment"
    )

    return MomentSeries(
        times=times,
        covariances=CovarianceSeries(times=times, values=values[:, :N_COV]),
        values=values[:, N_COV:],
    )
