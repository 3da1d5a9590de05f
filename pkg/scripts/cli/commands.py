"""
Scenario commands behind the CLI subcommands.

Each command takes a resolved ScenarioConfig and returns a pandas frame or
a summary mapping; writing is left to scripts.cli.output.
"""
import logging
import math
from typing import Any, Optional

import numpy as np
import pandas as pd

from scripts.cli.scenario import ScenarioConfig
from scripts.control.analysis import (
    StepSpecs,
    design_targets,
    final_value,
    poles_and_zeros,
    step_metrics,
    transfer_function,
    tune_pid,
)
from scripts.core.exceptions import InstabilityError, ValidationError
from scripts.core.model import (
    analytic_conditional_variances,
    analytic_unconditional_variances,
    squeezing_db,
)
from scripts.filtering.covariance import steady_state_covariances
from scripts.filtering.integration import uniform_grid
from scripts.filtering.moments import run_moments, stationary_excess_noise
from scripts.filtering.trajectory import run_ensemble
from scripts.sensing.force import detectability, steady_displacement
from scripts.utils.progress import ProgressTracker

logger = logging.getLogger(__name__)


def _grid(config: ScenarioConfig) -> np.ndarray:
    return uniform_grid(config.t_end, config.grid_points)


def _format_pole(pole: complex) -> Any:
    if pole.imag == 0.0:
        return float(pole.real)
    return f"{pole.real:.12g}{pole.imag:+.12g}j"


def cmd_variances(config: ScenarioConfig) -> pd.DataFrame:
    """Conditional, excess and unconditional quadrature variances over time."""
    series = run_moments(
        config.init, config.params, config.pid, config.force, config.t_end, _grid(config)
    )
    excess_q, _ = series.excess_noise()
    uncond_vq, uncond_vp = series.unconditional_variances()
    return pd.DataFrame(
        {
            "t": series.times,
            "cond_vq": series.covariances.column("v_q"),
            "cond_vp": series.covariances.column("v_p"),
            "excess_q": excess_q,
            "uncond_vq": uncond_vq,
            "uncond_vp": uncond_vp,
        }
    )


def cmd_track(config: ScenarioConfig) -> tuple[pd.DataFrame, dict[str, Any]]:
    """
    Setpoint tracking of the mean quadrature.

    Overshoot and settling time are measured after the last setpoint
    breakpoint, against the transfer-function final value when the loop is
    stable and against the last sample otherwise.

    Returns:
        Tuple of (frame with t, setpoint, mean_q; summary mapping ending with
        the closed-loop poles pole_1, pole_2 sorted by real part)
    """
    pid = config.pid
    series = run_moments(
        config.init, config.params, pid, config.force, config.t_end, _grid(config)
    )
    mean_q = series.column("m_q")
    setpoint = np.array([pid.setpoint.value(t) for t in series.times])
    frame = pd.DataFrame({"t": series.times, "setpoint": setpoint, "mean_q": mean_q})

    tf = transfer_function(config.params, pid)
    r_final = pid.setpoint.value(config.t_end)
    try:
        target = final_value(tf) * r_final
    except InstabilityError:
        logger.warning("Loop is unstable; measuring against the last sample")
        target = float(mean_q[-1])
    if not config.force.is_zero:
        target = float(mean_q[-1])

    last_break = max([0.0, *pid.setpoint.breakpoints(config.t_end)])
    after = series.times >= last_break
    start = mean_q[after][0]
    overshoot, settling = step_metrics(
        series.times[after] - last_break, mean_q[after] - start, target - start
    )

    summary: dict[str, Any] = {
        "final_mean_q": float(mean_q[-1]),
        "setpoint": r_final,
        "steady_error": r_final - float(mean_q[-1]),
        "overshoot": overshoot,
        "settling_time": settling,
    }
    poles, _ = poles_and_zeros(tf)
    ordered = sorted(np.asarray(poles, dtype=complex), key=lambda p: (p.real, p.imag))
    for i, pole in enumerate(ordered):
        summary[f"pole_{i + 1}"] = _format_pole(pole)
    return frame, summary


def cmd_tune(
    overshoot: float,
    settling_time: float,
    gamma: float,
    time_units: str = "gamma",
    alpha_d: float = 0.0,
) -> dict[str, Any]:
    """
    Design PID gains from step specifications.

    Args:
        overshoot: Overshoot fraction R
        settling_time: T_p, in units of 1/gamma or absolute
        gamma: Mechanical damping rate
        time_units: "gamma" or "absolute"
        alpha_d: Derivative gain to design around
    """
    if time_units not in ("gamma", "absolute"):
        raise ValidationError(
            "time units must be gamma or absolute", field_name="time_units", field_value=time_units
        )
    t_p = settling_time / gamma if time_units == "gamma" else settling_time
    specs = StepSpecs(overshoot, t_p)
    pid = tune_pid(specs, gamma, alpha_d)
    zeta, omega_n = design_targets(specs)
    return {
        "alpha_p": pid.alpha_p,
        "alpha_i": pid.alpha_i,
        "alpha_d": pid.alpha_d,
        "mu": pid.mu,
        "zeta": zeta,
        "omega_n_over_gamma": omega_n / gamma,
    }


def cmd_ensemble(
    config: ScenarioConfig, progress: Optional[ProgressTracker] = None
) -> pd.DataFrame:
    """
    Monte Carlo statistics of pi(Q) next to the moment-equation predictions.

    z-scores are (ensemble - prediction) / standard error, zero where the
    standard error vanishes.
    """
    stats = run_ensemble(
        config.trajectories,
        config.init,
        config.params,
        config.pid,
        config.t_end,
        _grid(config),
        config.seed,
        dt=config.dt,
        force=config.force,
        progress=progress,
    )
    series = run_moments(
        config.init, config.params, config.pid, config.force, config.t_end, stats.times
    )
    moment_mean = series.column("m_q")
    moment_excess, _ = series.excess_noise()
    cond_vq = series.covariances.column("v_q")
    uncond_vq, _ = series.unconditional_variances()

    def z_score(diff: np.ndarray, error: np.ndarray) -> np.ndarray:
        safe = np.where(error > 0, error, 1.0)
        return np.where(error > 0, diff / safe, 0.0)

    return pd.DataFrame(
        {
            "t": stats.times,
            "mean_q": stats.mean_q,
            "moment_mean_q": moment_mean,
            "z_mean": z_score(stats.mean_q - moment_mean, stats.se_mean_q),
            "var_q": stats.var_q,
            "moment_excess_q": moment_excess,
            "z_var": z_score(stats.var_q - moment_excess, stats.se_var_q),
            "cond_vq": cond_vq,
            "cond_plus_var_q": cond_vq + stats.var_q,
            "uncond_vq": uncond_vq,
        }
    )


def cmd_force(config: ScenarioConfig) -> dict[str, Any]:
    """Detectability of the configured force at t_end."""
    report = detectability(config.force, config.params, config.pid, config.t_end, config.init)
    open_q, open_p = steady_displacement(config.force, config.params.gamma)
    return {**report.to_dict(), "open_loop_q": open_q, "open_loop_p": open_p}


def cmd_steady(config: ScenarioConfig) -> pd.DataFrame:
    """Stationary variances next to the weak-coupling formulas (zero setpoint, no force)."""
    cov = steady_state_covariances(config.params, config.pid.alpha_d)
    excess_q, excess_p = stationary_excess_noise(cov, config.params, config.pid)
    cond_q, cond_p = analytic_conditional_variances(config.params, config.pid)
    uncond_q, uncond_p = analytic_unconditional_variances(config.params, config.pid)
    vq = cov.v_q + excess_q
    vp = cov.v_p + excess_p
    return pd.DataFrame(
        [
            {
                "n_ba": config.params.n_ba,
                "cond_vq": cov.v_q,
                "cond_vp": cov.v_p,
                "analytic_cond_vq": cond_q,
                "analytic_cond_vp": cond_p,
                "excess_q": excess_q,
                "excess_p": excess_p,
                "uncond_vq": vq,
                "uncond_vp": vp,
                "analytic_uncond_vq": uncond_q,
                "analytic_uncond_vp": uncond_p,
                "squeezing_db": squeezing_db(vq) if vq > 0 else math.nan,
            }
        ]
    )
