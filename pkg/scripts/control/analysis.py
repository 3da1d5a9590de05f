"""
Closed-loop transfer function of the PID-controlled quadrature mean.

From the reference r to the mean estimate <pi(Q)> the loop is

    G(s) = (mu * kp * s + ki) / ((1 + alpha_d) s^2 + (1 + alpha_p) gamma/2 s + ki)

with kp = alpha_p gamma / 2 and ki = alpha_i gamma^2 / 4. This module
evaluates poles, final values and step responses, and synthesizes gains
from overshoot and settling-time specifications.
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg, signal

from scripts.core.config import SETTLING_BAND
from scripts.core.exceptions import InstabilityError, UnreachableDesignError, ValidationError
from scripts.core.model import PidParams, SystemParams, validate_alpha_d

logger = logging.getLogger(__name__)

# Poles with real part above -STABILITY_TOL * |pole scale| count as unstable
STABILITY_TOL = 1e-12


@dataclass(frozen=True)
class ClosedLoopTf:
    """Coefficients of G(s) = (b1 s + b0) / (a2 s^2 + a1 s + a0)."""

    b1: float
    b0: float
    a2: float
    a1: float
    a0: float

    def __post_init__(self):
        for name in ("b1", "b0", "a2", "a1", "a0"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(
                    "transfer function coefficients must be finite",
                    field_name=name,
                    field_value=getattr(self, name),
                )
        if self.a2 <= 0:
            raise ValidationError(
                "leading denominator coefficient must be positive",
                field_name="a2",
                field_value=self.a2,
            )

    @property
    def numerator(self) -> np.ndarray:
        return np.array([self.b1, self.b0])

    @property
    def denominator(self) -> np.ndarray:
        return np.array([self.a2, self.a1, self.a0])

    @property
    def is_zero(self) -> bool:
        return self.b1 == 0.0 and self.b0 == 0.0


@dataclass(frozen=True)
class StepSpecs:
    """
    Step-response requirements.

    Attributes:
        overshoot_fraction: Maximum overshoot R as a fraction, 0 < R < 1
        settling_time: 2%-band settling time T_p
    """

    overshoot_fraction: float
    settling_time: float

    def __post_init__(self):
        if not 0.0 < self.overshoot_fraction < 1.0:
            raise ValidationError(
                "overshoot fraction must lie in (0, 1)",
                field_name="overshoot_fraction",
                field_value=self.overshoot_fraction,
            )
        if not math.isfinite(self.settling_time) or self.settling_time <= 0:
            raise ValidationError(
                "settling time must be positive",
                field_name="settling_time",
                field_value=self.settling_time,
            )


@dataclass(frozen=True)
class StepResponse:
    """
    Response to r = theta(t) on a time grid.

    Attributes:
        times: Sample times
        values: Output <pi(Q)> at each time
        final_value: lim_{t -> inf} of the output (NaN for an unstable loop)
        overshoot: Peak excess as a fraction of the final value
        settling_time: Last exit from the settling band, NaN if not settled on the grid
    """

    times: np.ndarray
    values: np.ndarray
    final_value: float
    overshoot: float
    settling_time: float


def transfer_function(params: SystemParams, pid: PidParams) -> ClosedLoopTf:
    """
    Closed-loop transfer function from the setpoint to the mean of pi(Q).

    The setpoint weighting mu scales only the proportional numerator term;
    mu = 0 removes the zero.
    """
    gamma = params.gamma
    kp = pid.alpha_p * gamma / 2.0
    ki = pid.alpha_i * gamma**2 / 4.0
    return ClosedLoopTf(
        b1=pid.mu * kp,
        b0=ki,
        a2=pid.derivative_factor,
        a1=(1.0 + pid.alpha_p) * gamma / 2.0,
        a0=ki,
    )


def poles_and_zeros(tf: ClosedLoopTf) -> tuple[np.ndarray, np.ndarray]:
    """Roots of the denominator and the numerator (no cancellation)."""
    poles = np.roots(tf.denominator)
    zeros = np.roots(tf.numerator) if not tf.is_zero else np.array([])
    return poles, zeros


def second_order_characteristics(tf: ClosedLoopTf) -> tuple[float, float]:
    """
    Damping ratio and natural frequency of the denominator.

    Returns:
        Tuple of (zeta, omega_n)

    Raises:
        ValidationError: Without integral action (a0 = 0) there is no natural frequency
    """
    if tf.a0 <= 0:
        raise ValidationError(
            "natural frequency requires a positive constant denominator term",
            field_name="a0",
            field_value=tf.a0,
        )
    omega_n = math.sqrt(tf.a0 / tf.a2)
    zeta = tf.a1 / (2.0 * tf.a2 * omega_n)
    return zeta, omega_n


def predicted_overshoot(zeta: float) -> float:
    """Overshoot exp(-pi zeta / sqrt(1 - zeta^2)) of a zero-free second-order system."""
    if zeta >= 1.0:
        return 0.0
    if zeta <= 0.0:
        return 1.0
    return math.exp(-math.pi * zeta / math.sqrt(1.0 - zeta**2))


def predicted_settling_time(zeta: float, omega_n: float) -> float:
    """Classical 2%-band estimate 4 / (zeta omega_n)."""
    if zeta <= 0 or omega_n <= 0:
        return math.inf
    return 4.0 / (zeta * omega_n)


def _reduced(tf: ClosedLoopTf) -> tuple[np.ndarray, np.ndarray]:
    """Numerator and denominator with a common root at s = 0 cancelled."""
    if tf.b0 == 0.0 and tf.a0 == 0.0:
        return np.array([tf.b1]), np.array([tf.a2, tf.a1])
    return tf.numerator, tf.denominator


def final_value(tf: ClosedLoopTf) -> float:
    """
    Steady output for a unit step, lim_{s -> 0} G(s).

    A pole at the origin shared with the numerator (no integral action) is
    cancelled before the stability check.

    Raises:
        InstabilityError: If a remaining pole lies in the closed right half-plane
    """
    numerator, denominator = _reduced(tf)
    poles = np.roots(denominator)
    scale = max(float(np.max(np.abs(poles))) if poles.size else 0.0, 1.0)
    if np.any(poles.real >= -STABILITY_TOL * scale):
        raise InstabilityError("closed loop has no finite final value", poles=poles)
    return float(numerator[-1] / denominator[-1])


def design_targets(specs: StepSpecs) -> tuple[float, float]:
    """Damping ratio and natural frequency that meet the step specifications."""
    log_r = math.log(specs.overshoot_fraction)
    zeta = -log_r / math.sqrt(math.pi**2 + log_r**2)
    omega_n = 4.0 / (zeta * specs.settling_time)
    return zeta, omega_n


def tune_pid(specs: StepSpecs, gamma: float, alpha_d: float = 0.0) -> PidParams:
    """
    Synthesize PI(D) gains for a zero-free second-order step response.

    The damping ratio follows from the overshoot and the natural frequency
    from the settling time T_p = 4 / (zeta omega_n). The derivative gain is
    kept as given and the other gains are rescaled by 1 + alpha_d. The
    returned mu = 0 removes the zero so that the loop matches the model.

    Args:
        specs: Overshoot fraction and settling time
        gamma: Mechanical damping rate
        alpha_d: Derivative gain to design around

    Returns:
        PidParams with mu = 0

    Raises:
        UnreachableDesignError: If the settling time requires alpha_p < 0
    """
    if not math.isfinite(gamma) or gamma <= 0:
        raise ValidationError("gamma must be positive", field_name="gamma", field_value=gamma)
    validate_alpha_d(alpha_d)

    zeta, omega_n = design_targets(specs)
    a = 1.0 + alpha_d
    alpha_p = 4.0 * a * zeta * omega_n / gamma - 1.0
    alpha_i = 4.0 * a * omega_n**2 / gamma**2

    if alpha_p < 0:
        raise UnreachableDesignError(
            "settling time is slower than the passive damping allows",
            details={"alpha_p": alpha_p},
            overshoot=specs.overshoot_fraction,
            settling_time=specs.settling_time,
        )

    logger.info(
        f"Tuned PID: zeta={zeta:.4f}, omega_n={omega_n / gamma:.4f} gamma, "
        f"alpha_p={alpha_p:.4f}, alpha_i={alpha_i:.4f}"
    )
    return PidParams(alpha_p=alpha_p, alpha_i=alpha_i, alpha_d=alpha_d, mu=0.0)


def step_metrics(times: np.ndarray, values: np.ndarray, target: float) -> tuple[float, float]:
    """
    Overshoot and settling time of a sampled response about its final value.

    Overshoot is measured on the normalized response values / target. A zero
    target has no overshoot and is settled only if the response stays at zero.

    Returns:
        Tuple of (overshoot fraction, settling time); NaN where undefined
    """
    if not math.isfinite(target):
        return math.nan, math.nan
    if target == 0.0:
        settled = np.allclose(values, 0.0)
        return 0.0, float(times[0]) if settled else math.nan
    overshoot = max(0.0, float(np.max(values / target)) - 1.0)
    return overshoot, _settling_time(times, values, target)


def _settling_time(times: np.ndarray, values: np.ndarray, target: float) -> float:
    band = SETTLING_BAND * abs(target)
    error = np.abs(values - target) - band
    outside = np.flatnonzero(error > 0)
    if outside.size == 0:
        return float(times[0])
    last = int(outside[-1])
    if last == times.size - 1:
        return math.nan
    # Linear interpolation of the band crossing
    e0, e1 = error[last], error[last + 1]
    fraction = e0 / (e0 - e1) if e0 != e1 else 0.0
    return float(times[last] + fraction * (times[last + 1] - times[last]))


def step_response(tf: ClosedLoopTf, grid: Sequence[float]) -> StepResponse:
    """
    Exact unit-step response on a time grid.

    Uses the state-space realization from scipy.signal.tf2ss and the matrix
    exponential of the input-augmented system, so each sample is exact up to
    rounding.

    Args:
        tf: Closed-loop transfer function
        grid: Non-negative, non-decreasing sample times

    Returns:
        StepResponse with measured overshoot and settling time
    """
    times = np.asarray(grid, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(times < 0) or np.any(np.diff(times) < 0):
        raise ValidationError(
            "step response grid must be non-negative and non-decreasing", field_name="grid"
        )

    try:
        y_final = final_value(tf)
    except InstabilityError:
        logger.warning("Step response of an unstable loop has no final value")
        y_final = math.nan

    if tf.is_zero:
        values = np.zeros_like(times)
    else:
        a_mat, b_mat, c_mat, d_mat = signal.tf2ss(
            np.trim_zeros(tf.numerator, "f"), tf.denominator
        )
        n = a_mat.shape[0]
        augmented = np.zeros((n + 1, n + 1))
        augmented[:n, :n] = a_mat
        augmented[:n, n:] = b_mat
        values = np.empty_like(times)
        for i, t in enumerate(times):
            state = linalg.expm(augmented * t)[:n, n]
            values[i] = (c_mat @ state)[0] + d_mat[0, 0]

    overshoot, settling = step_metrics(times, values, y_final)

    return StepResponse(
        times=times,
        values=values,
        final_value=y_final,
        overshoot=overshoot,
        settling_time=settling,
    )
