"""
Weak-force detection with a feedback-squeezed quadrature.

A resonant force F1 sin(t) + F2 cos(t) shifts the quadrature means; it is
detectable when the shift exceeds the unconditional quadrature
uncertainty.
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

from scripts.core.exceptions import ValidationError
from scripts.core.model import (
    CovariancePreset,
    ExternalForce,
    InitialState,
    PidParams,
    SystemParams,
)
from scripts.filtering.integration import DEFAULT_SETTINGS, IntegratorSettings
from scripts.filtering.moments import run_moments

logger = logging.getLogger(__name__)


def steady_displacement(force: ExternalForce, gamma: float) -> tuple[float, float]:
    """Open-loop stationary displacement (<Q>, <P>) = (-F1/gamma, F2/gamma)."""
    if not math.isfinite(gamma) or gamma <= 0:
        raise ValidationError("gamma must be positive", field_name="gamma", field_value=gamma)
    return -force.f1 / gamma, force.f2 / gamma


@dataclass(frozen=True)
class DetectabilityReport:
    """
    Signal-to-uncertainty summary of a forced run at t_end.

    Attributes:
        q, p: Mean displacements from the moment equations
        vq, vp: Unconditional variances at t_end
        ratio: |<Q>| / sqrt(V_Q)
        ratio_p: |<P>| / sqrt(V_P)
        open_loop_ratio: |F1/gamma| / sqrt(V_Q), the free-running shift
            against the feedback-squeezed uncertainty
    """

    t_end: float
    f1: float
    f2: float
    q: float
    p: float
    vq: float
    vp: float
    ratio: float
    ratio_p: float
    open_loop_ratio: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def detectability(
    force: ExternalForce,
    params: SystemParams,
    pid: PidParams,
    t_end: float,
    init: Optional[InitialState] = None,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
) -> DetectabilityReport:
    """
    Run the moment equations under a force and compare shift with uncertainty.

    Args:
        force: External force
        params: System parameters
        pid: Feedback gains (setpoint included)
        t_end: Evaluation time
        init: Initial state (thermal preset with zero means by default)
        settings: Integrator settings

    Returns:
        DetectabilityReport at t_end
    """
    init = init or InitialState(preset=CovariancePreset.THERMAL)
    series = run_moments(init, params, pid, force, t_end, [0.0, t_end], settings)
    final = series.final
    vq_series, vp_series = series.unconditional_variances()
    vq, vp = float(vq_series[-1]), float(vp_series[-1])

    report = DetectabilityReport(
        t_end=t_end,
        f1=force.f1,
        f2=force.f2,
        q=final.m_q,
        p=final.m_p,
        vq=vq,
        vp=vp,
        ratio=abs(final.m_q) / math.sqrt(vq),
        ratio_p=abs(final.m_p) / math.sqrt(vp),
        open_loop_ratio=abs(force.f1 / params.gamma) / math.sqrt(vq),
    )
    logger.info(
        f"Force ({force.f1:.4g}, {force.f2:.4g}): displacement q={report.q:.6g}, "
        f"ratio={report.ratio:.4g}"
    )
    return report
