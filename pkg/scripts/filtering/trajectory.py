"""
Stochastic filter trajectories and Monte Carlo ensembles.

Each trajectory integrates the filtered estimates with Euler-Maruyama,
driven by ideal innovations (a Wiener process). The Kalman covariances are
record-independent, so they are integrated once with dense output and
shared by every trajectory; only the noise differs.

Noise for trajectory i under seed s comes from its own counter-based
Philox stream keyed by (s, i), so results do not depend on batching or
thread scheduling.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from scripts.core.config import ABORT_FRACTION, DT_FRACTION, ENSEMBLE_BATCH, NOISE_BLOCK, THREADS
from scripts.core.exceptions import TrajectoryAbortError, ValidationError
from scripts.core.model import (
    ZERO_POINT_VARIANCE,
    CovarianceState,
    ExternalForce,
    InitialState,
    PidParams,
    SystemParams,
)
from scripts.filtering.covariance import covariance_interpolant
from scripts.filtering.integration import DEFAULT_SETTINGS, IntegratorSettings, validate_grid
from scripts.utils.progress import ProgressTracker

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajectoryState:
    """Filtered estimates of one run plus the integral-action memory."""

    pi_q: float = 0.0
    pi_p: float = 0.0
    pi_xa: float = 0.0
    pi_ya: float = 0.0
    err_int: float = 0.0
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.pi_q, self.pi_p, self.pi_xa, self.pi_ya, self.err_int], dtype=float)

    @classmethod
    def initial(cls, init: InitialState) -> "TrajectoryState":
        return cls(pi_q=init.q, pi_p=init.p, pi_xa=init.xa, pi_ya=init.ya)


def _diffusion(v: np.ndarray, kappa: float, alpha_d: float) -> np.ndarray:
    """Innovation gains for (Q, P, X_a, Y_a); v may hold one row or a column block."""
    scale = math.sqrt(2.0 * kappa)
    v = np.asarray(v, dtype=float)
    return scale * np.stack(
        [
            v[..., 8] / (1.0 + alpha_d),
            v[..., 9],
            v[..., 4],
            v[..., 5] - ZERO_POINT_VARIANCE,
        ],
        axis=-1,
    )


def _advance(
    x: np.ndarray,
    gains: np.ndarray,
    r: float,
    dw,
    dt: float,
    params: SystemParams,
    pid: PidParams,
    force: ExternalForce,
) -> np.ndarray:
    """One Euler-Maruyama step of the packed state (pi_q, pi_p, pi_xa, pi_ya, err_int)."""
    gamma, kappa, g = params.gamma, params.kappa, params.g
    kp = pid.alpha_p * gamma / 2.0
    ki = pid.alpha_i * gamma**2 / 4.0
    q, p, xa, ya, err = x

    drift_q = -gamma / 2.0 * q + kp * (pid.mu * r - q) + ki * err - force.f1 / 2.0
    drift_q = drift_q / pid.derivative_factor
    return np.array(
        [
            q + drift_q * dt + gains[0] * dw,
            p + (g * xa - gamma / 2.0 * p + force.f2 / 2.0) * dt + gains[1] * dw,
            xa - kappa / 2.0 * xa * dt + gains[2] * dw,
            ya + (g * q - kappa / 2.0 * ya) * dt + gains[3] * dw,
            err + (r - q) * dt,
        ]
    )


def step_trajectory(
    state: TrajectoryState,
    cov: CovarianceState,
    params: SystemParams,
    pid: PidParams,
    dW: float,
    dt: float,
    force: Optional[ExternalForce] = None,
    step_index: Optional[int] = None,
) -> TrajectoryState:
    """
    Advance a single trajectory by one Euler-Maruyama step.

    Args:
        state: Estimates at the start of the step
        cov: Conditional covariances at state.t
        params: System parameters
        pid: Feedback gains and setpoint
        dW: Innovation increment, Gaussian with variance dt
        dt: Step size
        force: Optional external force
        step_index: Index reported if the step fails

    Returns:
        Estimates at state.t + dt

    Raises:
        TrajectoryAbortError: If the new state is not finite
    """
    if dt <= 0:
        raise ValidationError("time step must be positive", field_name="dt", field_value=dt)
    force = force or ExternalForce()
    gains = _diffusion(cov.as_array(), params.kappa, pid.alpha_d)
    with np.errstate(over="ignore", invalid="ignore"):
        x = _advance(
            state.as_array(), gains, pid.setpoint.value(state.t), dW, dt, params, pid, force
        )
    if not np.all(np.isfinite(x)):
        raise TrajectoryAbortError(
            "trajectory state became non-finite",
            details={"t": state.t},
            step_index=step_index,
        )
    return TrajectoryState(*(float(value) for value in x), t=state.t + dt)


@dataclass(frozen=True)
class _Schedule:
    """
    Step grid shared by all trajectories of a run.

    Gains and setpoints are produced one noise block at a time from the dense
    covariance solution, so memory does not grow with the number of steps.
    """

    dt: float
    n_steps: int
    covariances: Callable[[np.ndarray], np.ndarray]
    kappa: float
    alpha_d: float
    setpoint_starts: np.ndarray
    setpoint_values: np.ndarray
    sample_steps: np.ndarray  # step index of every output time

    @property
    def sample_times(self) -> np.ndarray:
        return self.sample_steps * self.dt

    def block(self, first: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
        """Innovation gains (stop - first, 4) and setpoints for steps first..stop-1."""
        times = np.arange(first, stop) * self.dt
        gains = _diffusion(self.covariances(times), self.kappa, self.alpha_d)
        segment = np.searchsorted(self.setpoint_starts, times, side="right") - 1
        return gains, self.setpoint_values[segment]


def _build_schedule(
    init: InitialState,
    params: SystemParams,
    pid: PidParams,
    t_end: float,
    grid: np.ndarray,
    dt: Optional[float],
    settings: IntegratorSettings,
) -> _Schedule:
    target = DT_FRACTION / params.kappa if dt is None else dt
    if not math.isfinite(target) or target <= 0 or target > t_end:
        raise ValidationError(
            "time step must be positive and no larger than t_end",
            field_name="dt",
            field_value=target,
        )
    n_steps = max(math.ceil(t_end / target - 1e-9), 1)
    realized = t_end / n_steps

    covariances = covariance_interpolant(init, params, pid.alpha_d, t_end, settings)
    segments = pid.setpoint.segments
    return _Schedule(
        dt=realized,
        n_steps=n_steps,
        covariances=covariances,
        kappa=params.kappa,
        alpha_d=pid.alpha_d,
        setpoint_starts=np.array([start for start, _ in segments]),
        setpoint_values=np.array([value for _, value in segments]),
        sample_steps=np.clip(np.rint(grid / realized).astype(int), 0, n_steps),
    )


def trajectory_generator(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream of trajectory index under seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True)
class _BatchResult:
    samples: np.ndarray  # (len(grid), 5, batch)
    innovations: np.ndarray  # (len(grid), batch)
    abort_step: np.ndarray  # -1 where the trajectory survived


def _simulate_batch(
    indices: Sequence[int],
    seed: int,
    schedule: _Schedule,
    init: InitialState,
    params: SystemParams,
    pid: PidParams,
    force: ExternalForce,
) -> _BatchResult:
    size = len(indices)
    generators = [trajectory_generator(seed, index) for index in indices]
    sqrt_dt = math.sqrt(schedule.dt)

    x = np.repeat(TrajectoryState.initial(init).as_array()[:, None], size, axis=1)
    cumulative = np.zeros(size)
    abort_step = np.full(size, -1)
    samples = np.empty((schedule.sample_steps.size, 5, size))
    innovations = np.empty((schedule.sample_steps.size, size))
    pointer = 0
    noise = np.empty((size, 0))
    gains, setpoint = np.empty((0, 4)), np.empty(0)

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(schedule.n_steps + 1):
            while pointer < schedule.sample_steps.size and schedule.sample_steps[pointer] == k:
                samples[pointer] = x
                innovations[pointer] = cumulative
                pointer += 1
            if k == schedule.n_steps:
                break

            column = k % NOISE_BLOCK
            if column == 0:
                width = min(NOISE_BLOCK, schedule.n_steps - k)
                gains, setpoint = schedule.block(k, k + width)
                noise = sqrt_dt * np.stack(
                    [generator.standard_normal(width) for generator in generators]
                )
            dw = noise[:, column]
            cumulative = cumulative + dw

            x = _advance(x, gains[column], setpoint[column], dw, schedule.dt, params, pid, force)
            bad = ~np.all(np.isfinite(x), axis=0)
            if np.any(bad):
                fresh = bad & (abort_step < 0)
                abort_step[fresh] = k
                x[:, bad] = 0.0

    return _BatchResult(samples=samples, innovations=innovations, abort_step=abort_step)


@dataclass(frozen=True)
class TrajectoryPath:
    """A single realization sampled on the output grid, with its innovations I(t)."""

    times: np.ndarray
    pi_q: np.ndarray
    pi_p: np.ndarray
    pi_xa: np.ndarray
    pi_ya: np.ndarray
    err_int: np.ndarray
    innovations: np.ndarray
    seed: int
    index: int
    dt: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "pi_q": self.pi_q,
                "pi_p": self.pi_p,
                "pi_xa": self.pi_xa,
                "pi_ya": self.pi_ya,
                "err_int": self.err_int,
                "innovation": self.innovations,
            }
        )


def _validate_seed(seed: int) -> None:
    if not isinstance(seed, (int, np.integer)) or seed < 0:
        raise ValidationError(
            "seed must be a non-negative integer", field_name="seed", field_value=seed
        )


def run_trajectory(
    init: InitialState,
    params: SystemParams,
    pid: PidParams,
    t_end: float,
    grid: Sequence[float],
    seed: int,
    index: int = 0,
    dt: Optional[float] = None,
    force: Optional[ExternalForce] = None,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
) -> TrajectoryPath:
    """
    Simulate one filter trajectory.

    The result is identical to trajectory index of run_ensemble with the
    same seed and dt. Outputs are taken at the step nearest each grid time.

    Raises:
        TrajectoryAbortError: If the trajectory becomes non-finite
    """
    _validate_seed(seed)
    times = validate_grid(t_end, grid)
    force = force or ExternalForce()
    schedule = _build_schedule(init, params, pid, t_end, times, dt, settings)

    result = _simulate_batch([index], seed, schedule, init, params, pid, force)
    if result.abort_step[0] >= 0:
        raise TrajectoryAbortError(
            "trajectory state became non-finite",
            step_index=int(result.abort_step[0]),
            aborted=1,
            total=1,
        )

    states = result.samples[:, :, 0]
    return TrajectoryPath(
        times=schedule.sample_times,
        pi_q=states[:, 0],
        pi_p=states[:, 1],
        pi_xa=states[:, 2],
        pi_ya=states[:, 3],
        err_int=states[:, 4],
        innovations=result.innovations[:, 0],
        seed=seed,
        index=index,
        dt=schedule.dt,
    )


@dataclass(frozen=True)
class EnsembleStats:
    """
    Ensemble mean and variance (ddof=1) of pi(Q) and pi(P) per output time.

    Attributes:
        times: Realized sample times (nearest step to each grid time)
        n_traj: Number of trajectories that survived
        aborted: Number of trajectories dropped as non-finite
        seed: RNG seed of the run
        dt: Realized Euler-Maruyama step
    """

    times: np.ndarray
    mean_q: np.ndarray
    var_q: np.ndarray
    mean_p: np.ndarray
    var_p: np.ndarray
    n_traj: int
    aborted: int
    seed: int
    dt: float

    @property
    def se_mean_q(self) -> np.ndarray:
        return np.sqrt(self.var_q / self.n_traj)

    @property
    def se_mean_p(self) -> np.ndarray:
        return np.sqrt(self.var_p / self.n_traj)

    @property
    def se_var_q(self) -> np.ndarray:
        return self.var_q * math.sqrt(2.0 / (self.n_traj - 1))

    @property
    def se_var_p(self) -> np.ndarray:
        return self.var_p * math.sqrt(2.0 / (self.n_traj - 1))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "t": self.times,
                "mean_q": self.mean_q,
                "var_q": self.var_q,
                "se_mean_q": self.se_mean_q,
                "se_var_q": self.se_var_q,
                "mean_p": self.mean_p,
                "var_p": self.var_p,
            }
        )


def run_ensemble(
    n_traj: int,
    init: InitialState,
    params: SystemParams,
    pid: PidParams,
    t_end: float,
    grid: Sequence[float],
    seed: int,
    dt: Optional[float] = None,
    force: Optional[ExternalForce] = None,
    settings: IntegratorSettings = DEFAULT_SETTINGS,
    threads: Optional[int] = None,
    batch_size: Optional[int] = None,
    progress: Optional[ProgressTracker] = None,
) -> EnsembleStats:
    """
    Run n_traj independent trajectories and reduce them to ensemble statistics.

    Batches run on a thread pool; results are reassembled in trajectory
    order, so the statistics do not depend on the thread count.

    Args:
        n_traj: Number of trajectories (at least 2)
        init: Initial estimates and covariance preset
        params: System parameters
        pid: Feedback gains and setpoint
        t_end: Final time
        grid: Output times within [0, t_end]
        seed: Non-negative RNG seed
        dt: Euler-Maruyama step (defaults to QS_DT_FRACTION / kappa)
        force: Optional external force
        settings: Integrator settings for the shared covariances
        threads: Worker cap (defaults to QS_THREADS)
        batch_size: Trajectories per batch (defaults to QS_ENSEMBLE_BATCH)
        progress: Optional progress tracker

    Returns:
        EnsembleStats on the realized sample times

    Raises:
        ValidationError: On invalid sizes, seed, grid or dt
        TrajectoryAbortError: If more than QS_ABORT_FRACTION of trajectories abort
    """
    if not isinstance(n_traj, (int, np.integer)) or n_traj < 2:
        raise ValidationError(
            "ensemble needs at least two trajectories", field_name="n_traj", field_value=n_traj
        )
    _validate_seed(seed)
    times = validate_grid(t_end, grid)
    force = force or ExternalForce()
    threads = max(threads or THREADS, 1)
    batch_size = max(batch_size or ENSEMBLE_BATCH, 1)
    progress = progress or ProgressTracker(enabled=False)

    schedule = _build_schedule(init, params, pid, t_end, times, dt, settings)
    batches = [
        list(range(start, min(start + batch_size, n_traj)))
        for start in range(0, n_traj, batch_size)
    ]
    logger.info(
        f"Running {n_traj} trajectories: {schedule.n_steps} steps of dt={schedule.dt:.4g}, "
        f"{len(batches)} batch(es) on {min(threads, len(batches))} thread(s)"
    )

    progress.start(n_traj, label="trajectories")
    results = []
    with ThreadPoolExecutor(max_workers=min(threads, len(batches))) as executor:
        futures = [
            executor.submit(_simulate_batch, batch, seed, schedule, init, params, pid, force)
            for batch in batches
        ]
        for batch, future in zip(batches, futures):
            results.append(future.result())
            progress.update(len(batch))
    progress.finish()

    samples = np.concatenate([result.samples for result in results], axis=2)
    abort_step = np.concatenate([result.abort_step for result in results])
    valid = abort_step < 0
    aborted = int(n_traj - np.count_nonzero(valid))

    if aborted:
        logger.warning(f"{aborted}/{n_traj} trajectories aborted")
    if aborted > ABORT_FRACTION * n_traj or np.count_nonzero(valid) < 2:
        first = int(abort_step[~valid].min())
        raise TrajectoryAbortError(
            "too many trajectories became non-finite",
            step_index=first,
            aborted=aborted,
            total=n_traj,
        )

    q = samples[:, 0, valid]
    p = samples[:, 1, valid]
    return EnsembleStats(
        times=schedule.sample_times,
        mean_q=q.mean(axis=1),
        var_q=q.var(axis=1, ddof=1),
        mean_p=p.mean(axis=1),
        var_p=p.var(axis=1, ddof=1),
        n_traj=int(np.count_nonzero(valid)),
        aborted=aborted,
        seed=int(seed),
        dt=schedule.dt,
    )
