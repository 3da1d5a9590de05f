"""
Physical and feedback model of the back-action evading quadrature measurement.

Units: hbar = 1 and all rates are expressed in units of the mechanical
frequency (omega_m = 1). The homodyne phase is fixed to the measurement of
the cavity Y_a quadrature, which carries the mechanical Q quadrature.

The closed-form variances below are lowest-order expansions in
G, gamma << kappa. They are exposed as oracles and are never clamped: for
large back-action they can return a negative Q variance.
"""
import bisect
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from scripts.core.exceptions import ValidationError


ZERO_POINT_VARIANCE = 0.5


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite", field_name=name, field_value=value)


@dataclass(frozen=True)
class SystemParams:
    """
    Optomechanical rates in units of omega_m.

    Attributes:
        kappa: Cavity damping rate
        gamma: Mechanical damping rate
        g: Renormalized (drive-enhanced) optomechanical coupling G
        n_th: Thermal occupation of the mechanical bath
    """

    kappa: float
    gamma: float
    g: float = 0.0
    n_th: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            _require_finite(f.name, getattr(self, f.name))
        if self.kappa <= 0:
            raise ValidationError(
                "kappa must be positive", field_name="kappa", field_value=self.kappa
            )
        if self.gamma <= 0:
            raise ValidationError(
                "gamma must be positive", field_name="gamma", field_value=self.gamma
            )
        if self.g < 0:
            raise ValidationError("g must be non-negative", field_name="g", field_value=self.g)
        if self.n_th < 0:
            raise ValidationError(
                "n_th must be non-negative", field_name="n_th", field_value=self.n_th
            )
        if not math.isfinite(back_action_number(self)):
            raise ValidationError(
                "back-action number overflows", field_name="g", field_value=self.g
            )

    @property
    def n_ba(self) -> float:
        """Measurement back-action number 2G^2/(gamma kappa)."""
        return back_action_number(self)

    @property
    def thermal_variance(self) -> float:
        """Thermal quadrature variance n_th + 1/2."""
        return self.n_th + ZERO_POINT_VARIANCE

    @classmethod
    def for_back_action(
        cls, n_ba: float, kappa: float, gamma: float, n_th: float = 0.0
    ) -> "SystemParams":
        """Build parameters with the coupling chosen to hit a target n_BA."""
        if n_ba < 0:
            raise ValidationError("n_ba must be non-negative", field_name="n_ba", field_value=n_ba)
        return cls(kappa=kappa, gamma=gamma, g=math.sqrt(n_ba * gamma * kappa / 2.0), n_th=n_th)


@dataclass(frozen=True)
class SetpointSignal:
    """
    Piecewise-constant reference r(t).

    Segments are (start_time, value) pairs; the first starts at t = 0 and the
    signal is right-continuous at every breakpoint. Before t = 0 the signal
    is taken as zero.
    """

    segments: tuple[tuple[float, float], ...] = ((0.0, 0.0),)

    def __post_init__(self):
        segments = tuple((float(start), float(value)) for start, value in self.segments)
        object.__setattr__(self, "segments", segments)

        if not segments:
            raise ValidationError("setpoint needs at least one segment", field_name="segments")
        if segments[0][0] != 0.0:
            raise ValidationError(
                "first setpoint segment must start at t = 0",
                field_name="segments",
                field_value=segments[0][0],
            )
        for start, value in segments:
            _require_finite("segment start", start)
            _require_finite("segment value", value)
        starts = [start for start, _ in segments]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValidationError(
                "setpoint segment starts must be strictly increasing",
                field_name="segments",
                field_value=starts,
            )

    @classmethod
    def zero(cls) -> "SetpointSignal":
        return cls()

    @classmethod
    def step(cls, value: float = 1.0, at: float = 0.0) -> "SetpointSignal":
        """Step of height value switched on at time at (r = value * theta(t - at))."""
        if at == 0.0:
            return cls(((0.0, value),))
        return cls(((0.0, 0.0), (at, value)))

    @property
    def starts(self) -> list[float]:
        return [start for start, _ in self.segments]

    @property
    def is_zero(self) -> bool:
        return all(value == 0.0 for _, value in self.segments)

    def _index(self, t: float) -> int:
        return max(bisect.bisect_right(self.starts, t) - 1, 0)

    def value(self, t: float) -> float:
        """Evaluate r(t) (right-continuous; zero for t < 0)."""
        if t < 0:
            return 0.0
        return self.segments[self._index(t)][1]

    def integral(self, t: float) -> float:
        """Exact integral of r from 0 to t."""
        if t <= 0:
            return 0.0
        total = 0.0
        for i, (start, value) in enumerate(self.segments):
            if start >= t:
                break
            end = self.segments[i + 1][0] if i + 1 < len(self.segments) else t
            total += value * (min(end, t) - start)
        return total

    def breakpoints(self, t_end: Optional[float] = None) -> list[float]:
        """Segment starts after t = 0 (optionally only those before t_end)."""
        points = self.starts[1:]
        if t_end is not None:
            points = [t for t in points if t < t_end]
        return points

    def jump(self, t: float) -> float:
        """Size of the discontinuity r(t) - r(t-)."""
        index = bisect.bisect_left(self.starts, t)
        if index >= len(self.segments) or self.segments[index][0] != t:
            return 0.0
        previous = self.segments[index - 1][1] if index > 0 else 0.0
        return self.segments[index][1] - previous

    def scaled(self, factor: float) -> "SetpointSignal":
        """Same breakpoints with every start time multiplied by factor."""
        return SetpointSignal(tuple((start * factor, value) for start, value in self.segments))


@dataclass(frozen=True)
class PidParams:
    """
    PID feedback gains acting on the estimate pi_t(Q).

    Attributes:
        alpha_p: Proportional gain (extra damping alpha_p * gamma / 2)
        alpha_i: Integral gain (in units of gamma^2 / 4)
        alpha_d: Derivative gain; the filter drift is divided by 1 + alpha_d
        mu: Setpoint weighting inside the proportional term
        setpoint: Reference signal r(t)
    """

    alpha_p: float = 0.0
    alpha_i: float = 0.0
    alpha_d: float = 0.0
    mu: float = 1.0
    setpoint: SetpointSignal = field(default_factory=SetpointSignal.zero)

    def __post_init__(self):
        for name in ("alpha_p", "alpha_i", "alpha_d", "mu"):
            _require_finite(name, getattr(self, name))
        if self.alpha_p < 0:
            raise ValidationError(
                "alpha_p must be non-negative", field_name="alpha_p", field_value=self.alpha_p
            )
        if self.alpha_i < 0:
            raise ValidationError(
                "alpha_i must be non-negative", field_name="alpha_i", field_value=self.alpha_i
            )
        validate_alpha_d(self.alpha_d)

    @property
    def derivative_factor(self) -> float:
        """1 + alpha_d, the divisor of the feedback-modified filter."""
        return 1.0 + self.alpha_d


def validate_alpha_d(alpha_d: float) -> None:
    """Reject derivative gains for which 1/(1 + alpha_d) is not finite and positive."""
    if not math.isfinite(alpha_d) or 1.0 + alpha_d <= 0:
        raise ValidationError(
            "derivative gain must satisfy 1 + alpha_d > 0",
            field_name="alpha_d",
            field_value=alpha_d,
        )


@dataclass(frozen=True)
class CovarianceState:
    """
    The ten conditional covariances V_{X,Y} = pi({X,Y}/2) - pi(X) pi(Y).

    Fields hold floats for a single time, or equal-length numpy arrays when
    the state is a view over a time series.
    """

    v_q: float
    v_qp: float
    v_p: float
    v_xa: float
    v_xaya: float
    v_ya: float
    v_xaq: float
    v_xap: float
    v_yaq: float
    v_yap: float

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "CovarianceState":
        values = np.asarray(values, dtype=float)
        if values.shape[0] != 10:
            raise ValidationError(
                "covariance state needs ten components",
                field_name="values",
                field_value=values.shape[0],
            )
        return cls(*(values[i] if values.ndim > 1 else float(values[i]) for i in range(10)))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.field_names()], dtype=float)

    @classmethod
    def ground(cls) -> "CovarianceState":
        return cls.thermal(0.0)

    @classmethod
    def thermal(cls, n_th: float) -> "CovarianceState":
        """Thermal mechanics, vacuum cavity, no correlations."""
        v = n_th + ZERO_POINT_VARIANCE
        return cls(v, 0.0, v, ZERO_POINT_VARIANCE, 0.0, ZERO_POINT_VARIANCE, 0.0, 0.0, 0.0, 0.0)


class CovariancePreset(str, Enum):
    GROUND = "ground"
    THERMAL = "thermal"
    CUSTOM = "custom"


@dataclass(frozen=True)
class InitialState:
    """
    Gaussian initial condition of the filter.

    Attributes:
        q, p, xa, ya: Initial estimates of Q, P, X_a, Y_a
        preset: Covariance preset (ground, thermal at params.n_th, or custom)
        custom: Covariances used with the custom preset
    """

    q: float = 0.0
    p: float = 0.0
    xa: float = 0.0
    ya: float = 0.0
    preset: CovariancePreset = CovariancePreset.GROUND
    custom: Optional[CovarianceState] = None

    def __post_init__(self):
        object.__setattr__(self, "preset", CovariancePreset(self.preset))
        for name in ("q", "p", "xa", "ya"):
            _require_finite(name, getattr(self, name))
        if self.preset is CovariancePreset.CUSTOM and self.custom is None:
            raise ValidationError("custom preset requires covariances", field_name="custom")

    def covariances(self, params: SystemParams) -> CovarianceState:
        """Resolve the preset into concrete covariances."""
        if self.preset is CovariancePreset.GROUND:
            return CovarianceState.ground()
        if self.preset is CovariancePreset.THERMAL:
            return CovarianceState.thermal(params.n_th)
        return self.custom

    @property
    def means(self) -> np.ndarray:
        return np.array([self.q, self.p, self.xa, self.ya], dtype=float)


@dataclass(frozen=True)
class ExternalForce:
    """
    Resonant external force F1 sin(wt) + F2 cos(wt) in units of hbar (= 1).

    In the rotating frame it drives the Q mean with -F1/2 and the P mean
    with +F2/2.
    """

    f1: float = 0.0
    f2: float = 0.0

    def __post_init__(self):
        _require_finite("f1", self.f1)
        _require_finite("f2", self.f2)

    @property
    def is_zero(self) -> bool:
        return self.f1 == 0.0 and self.f2 == 0.0

    def scaled(self, factor: float) -> "ExternalForce":
        return ExternalForce(self.f1 * factor, self.f2 * factor)


def back_action_number(params: SystemParams) -> float:
    """Return n_BA = 2 G^2 / (gamma kappa)."""
    return 2.0 * params.g**2 / (params.gamma * params.kappa)


def thermal_occupation(temperature: float) -> float:
    """
    Bose occupation of the mechanical mode.

    Args:
        temperature: k_B T in units of hbar omega_m

    Returns:
        n_th = 1 / (exp(1/T) - 1); zero at T = 0
    """
    if temperature < 0:
        raise ValidationError(
            "temperature must be non-negative", field_name="temperature", field_value=temperature
        )
    if temperature == 0:
        return 0.0
    return 1.0 / math.expm1(1.0 / temperature)


def squeezing_bracket(alpha_p: float, alpha_d: float) -> float:
    """Feedback factor alpha_p/((1+alpha_p)(1+alpha_d)) + alpha_d/(1+alpha_d)^2."""
    validate_alpha_d(alpha_d)
    a = 1.0 + alpha_d
    return alpha_p / ((1.0 + alpha_p) * a) + alpha_d / a**2


def optimal_derivative_gain(alpha_p: float) -> float:
    """Derivative gain maximizing the unconditional squeezing for a given alpha_p."""
    if alpha_p < 0:
        raise ValidationError(
            "alpha_p must be non-negative", field_name="alpha_p", field_value=alpha_p
        )
    return 1.0 / (1.0 + 2.0 * alpha_p)


def squeezing_db(variance: float) -> float:
    """Variance relative to the zero-point level in dB (negative means squeezed)."""
    if variance <= 0:
        raise ValidationError(
            "variance must be positive to express in dB",
            field_name="variance",
            field_value=variance,
        )
    return 10.0 * math.log10(variance / ZERO_POINT_VARIANCE)


def analytic_conditional_variances(params: SystemParams, pid: PidParams) -> tuple[float, float]:
    """
    Weak-coupling stationary conditional variances (V_Q, V_P).

    Only the derivative gain changes the estimate uncertainty; proportional
    and integral action enter through known forces and leave it unchanged.
    """
    n = params.thermal_variance
    a = pid.derivative_factor
    vq = n - 4.0 * params.n_ba * (1.0 + 2.0 * pid.alpha_d) / a**2 * n**2
    vp = n + params.n_ba
    return vq, vp


def analytic_unconditional_variances(params: SystemParams, pid: PidParams) -> tuple[float, float]:
    """Weak-coupling stationary unconditional variances (V_Q, V_P)."""
    n = params.thermal_variance
    vq = n - 4.0 * params.n_ba * n**2 * squeezing_bracket(pid.alpha_p, pid.alpha_d)
    vp = n + params.n_ba
    return vq, vp
