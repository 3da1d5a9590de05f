"""
Scenario files for the command-line runner.

A scenario is flat KEY=VALUE text read with python-dotenv. Times may be
given in units of 1/gamma (TIME_UNITS=gamma, the default) or in absolute
units of 1/omega_m; forces in absolute units or in units of gamma.
Everything is converted to absolute units on load, and the resolved form
serializes back to the same keys.
"""
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Callable, Mapping, Optional, Union

from dotenv import dotenv_values

from scripts.core.exceptions import ConfigurationError
from scripts.core.model import (
    CovariancePreset,
    CovarianceState,
    ExternalForce,
    InitialState,
    PidParams,
    SetpointSignal,
    SystemParams,
)

logger = logging.getLogger(__name__)

TIME_UNITS = ("gamma", "absolute")
FORCE_UNITS = ("absolute", "gamma")

# Recognized keys and their defaults (None means required or unset)
SCENARIO_DEFAULTS: dict[str, Optional[str]] = {
    "KAPPA": None,
    "GAMMA": None,
    "G": "0",
    "N_TH": "0",
    "ALPHA_P": "0",
    "ALPHA_I": "0",
    "ALPHA_D": "0",
    "MU": "1",
    "SETPOINT": "0:0",
    "INITIAL_Q": "0",
    "INITIAL_P": "0",
    "INITIAL_XA": "0",
    "INITIAL_YA": "0",
    "COVARIANCE_PRESET": "ground",
    "CUSTOM_COVARIANCE": None,
    "F1": "0",
    "F2": "0",
    "FORCE_UNITS": "absolute",
    "TIME_UNITS": "gamma",
    "T_END": "20",
    "GRID_POINTS": "201",
    "TRAJECTORIES": "1000",
    "SEED": "0",
    "DT": None,
    "OUTPUT": None,
}

REQUIRED_KEYS = ("KAPPA", "GAMMA")


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Fully resolved scenario in absolute units.

    Attributes:
        params: System parameters
        pid: Feedback gains and setpoint
        init: Initial estimates and covariance preset
        force: External force
        t_end: Horizon
        grid_points: Number of evenly spaced output times
        trajectories: Ensemble size
        seed: RNG seed
        dt: Euler-Maruyama step (None for the configured default)
        output: Default output path (None for stdout)
        source: File the scenario was read from
    """

    params: SystemParams
    pid: PidParams
    init: InitialState
    force: ExternalForce
    t_end: float
    grid_points: int = 201
    trajectories: int = 1000
    seed: int = 0
    dt: Optional[float] = None
    output: Optional[str] = None
    source: Optional[str] = None

    def resolved(self) -> dict[str, Any]:
        """Serializable form with absolute units, loadable with from_resolved."""
        values: dict[str, Any] = {
            "KAPPA": self.params.kappa,
            "GAMMA": self.params.gamma,
            "G": self.params.g,
            "N_TH": self.params.n_th,
            "ALPHA_P": self.pid.alpha_p,
            "ALPHA_I": self.pid.alpha_i,
            "ALPHA_D": self.pid.alpha_d,
            "MU": self.pid.mu,
            "SETPOINT": ";".join(
                f"{start!r}:{value!r}" for start, value in self.pid.setpoint.segments
            ),
            "INITIAL_Q": self.init.q,
            "INITIAL_P": self.init.p,
            "INITIAL_XA": self.init.xa,
            "INITIAL_YA": self.init.ya,
            "COVARIANCE_PRESET": self.init.preset.value,
            "F1": self.force.f1,
            "F2": self.force.f2,
            "FORCE_UNITS": "absolute",
            "TIME_UNITS": "absolute",
            "T_END": self.t_end,
            "GRID_POINTS": self.grid_points,
            "TRAJECTORIES": self.trajectories,
            "SEED": self.seed,
        }
        if self.init.custom is not None:
            values["CUSTOM_COVARIANCE"] = ",".join(
                repr(float(v)) for v in self.init.custom.as_array()
            )
        if self.dt is not None:
            values["DT"] = self.dt
        if self.output is not None:
            values["OUTPUT"] = self.output
        return values

    @classmethod
    def from_resolved(cls, values: Mapping[str, Any]) -> "ScenarioConfig":
        return parse_scenario({key: str(value) for key, value in values.items()})

    def with_overrides(
        self, seed: Optional[int] = None, trajectories: Optional[int] = None
    ) -> "ScenarioConfig":
        """Copy with command-line overrides applied."""
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if trajectories is not None:
            changes["trajectories"] = trajectories
        return replace(self, **changes) if changes else self


def _converter(source: Optional[str]) -> Callable[[str, str, Callable], Any]:
    def convert(key: str, raw: str, kind: Callable) -> Any:
        try:
            value = kind(raw.strip())
        except (TypeError, ValueError) as e:
            raise ConfigurationError(
                f"malformed value {raw!r}: {e}", config_key=key, config_file=source
            ) from e
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigurationError(
                f"value must be finite, got {raw!r}", config_key=key, config_file=source
            )
        return value

    return convert


def _parse_setpoint(raw: str, source: Optional[str]) -> tuple[tuple[float, float], ...]:
    segments = []
    for item in filter(None, (part.strip() for part in raw.split(";"))):
        start, sep, value = item.partition(":")
        if not sep:
            raise ConfigurationError(
                f"setpoint segment {item!r} must be start:value",
                config_key="SETPOINT",
                config_file=source,
            )
        try:
            segments.append((float(start), float(value)))
        except ValueError as e:
            raise ConfigurationError(
                f"malformed setpoint segment {item!r}",
                config_key="SETPOINT",
                config_file=source,
            ) from e
    if not segments:
        raise ConfigurationError("setpoint is empty", config_key="SETPOINT", config_file=source)
    return tuple(segments)


def _choice(key: str, raw: str, options: tuple[str, ...], source: Optional[str]) -> str:
    value = raw.strip().lower()
    if value not in options:
        raise ConfigurationError(
            f"{key} must be one of {', '.join(options)}, got {raw!r}",
            config_key=key,
            config_file=source,
        )
    return value


def parse_scenario(
    values: Mapping[str, Optional[str]], source: Optional[str] = None
) -> ScenarioConfig:
    """
    Build a ScenarioConfig from raw KEY=VALUE pairs.

    Args:
        values: Raw string values (keys are case-sensitive, upper case)
        source: File name reported in errors

    Returns:
        ScenarioConfig in absolute units

    Raises:
        ConfigurationError: On unknown keys, missing required keys or malformed values
        ValidationError: On physically invalid parameters
    """
    unknown = sorted(set(values) - set(SCENARIO_DEFAULTS))
    if unknown:
        raise ConfigurationError(
            f"unknown scenario key(s): {', '.join(unknown)}",
            config_key=unknown[0],
            config_file=source,
        )
    for key, raw in values.items():
        if raw is None:
            raise ConfigurationError("key has no value", config_key=key, config_file=source)

    merged = {**SCENARIO_DEFAULTS, **values}
    for key in REQUIRED_KEYS:
        if merged[key] is None:
            raise ConfigurationError("required key is missing", config_key=key, config_file=source)

    convert = _converter(source)
    gamma = convert("GAMMA", merged["GAMMA"], float)
    if gamma <= 0:
        raise ConfigurationError("GAMMA must be positive", config_key="GAMMA", config_file=source)
    time_units = _choice("TIME_UNITS", merged["TIME_UNITS"], TIME_UNITS, source)
    force_units = _choice("FORCE_UNITS", merged["FORCE_UNITS"], FORCE_UNITS, source)
    time_scale = 1.0 / gamma if time_units == "gamma" else 1.0
    force_scale = gamma if force_units == "gamma" else 1.0

    params = SystemParams(
        kappa=convert("KAPPA", merged["KAPPA"], float),
        gamma=gamma,
        g=convert("G", merged["G"], float),
        n_th=convert("N_TH", merged["N_TH"], float),
    )
    setpoint = SetpointSignal(_parse_setpoint(merged["SETPOINT"], source)).scaled(time_scale)
    pid = PidParams(
        alpha_p=convert("ALPHA_P", merged["ALPHA_P"], float),
        alpha_i=convert("ALPHA_I", merged["ALPHA_I"], float),
        alpha_d=convert("ALPHA_D", merged["ALPHA_D"], float),
        mu=convert("MU", merged["MU"], float),
        setpoint=setpoint,
    )

    preset = _choice(
        "COVARIANCE_PRESET",
        merged["COVARIANCE_PRESET"],
        tuple(p.value for p in CovariancePreset),
        source,
    )
    custom = None
    if merged["CUSTOM_COVARIANCE"] is not None:
        raw_parts = merged["CUSTOM_COVARIANCE"].split(",")
        parts = [convert("CUSTOM_COVARIANCE", p, float) for p in raw_parts]
        if len(parts) != 10:
            raise ConfigurationError(
                f"CUSTOM_COVARIANCE needs ten numbers, got {len(parts)}",
                config_key="CUSTOM_COVARIANCE",
                config_file=source,
            )
        custom = CovarianceState.from_array(parts)
    if preset == CovariancePreset.CUSTOM.value and custom is None:
        raise ConfigurationError(
            "custom covariance preset needs CUSTOM_COVARIANCE",
            config_key="CUSTOM_COVARIANCE",
            config_file=source,
        )
    init = InitialState(
        q=convert("INITIAL_Q", merged["INITIAL_Q"], float),
        p=convert("INITIAL_P", merged["INITIAL_P"], float),
        xa=convert("INITIAL_XA", merged["INITIAL_XA"], float),
        ya=convert("INITIAL_YA", merged["INITIAL_YA"], float),
        preset=preset,
        custom=custom,
    )

    force = ExternalForce(
        f1=convert("F1", merged["F1"], float) * force_scale,
        f2=convert("F2", merged["F2"], float) * force_scale,
    )

    t_end = convert("T_END", merged["T_END"], float) * time_scale
    if t_end <= 0:
        raise ConfigurationError("T_END must be positive", config_key="T_END", config_file=source)
    grid_points = convert("GRID_POINTS", merged["GRID_POINTS"], int)
    if grid_points < 2:
        raise ConfigurationError(
            "GRID_POINTS must be at least 2", config_key="GRID_POINTS", config_file=source
        )
    dt = None
    if merged["DT"] is not None:
        dt = convert("DT", merged["DT"], float) * time_scale

    return ScenarioConfig(
        params=params,
        pid=pid,
        init=init,
        force=force,
        t_end=t_end,
        grid_points=grid_points,
        trajectories=convert("TRAJECTORIES", merged["TRAJECTORIES"], int),
        seed=convert("SEED", merged["SEED"], int),
        dt=dt,
        output=merged["OUTPUT"],
        source=source,
    )


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """
    Read and validate a scenario file.

    Raises:
        ConfigurationError: If the file is missing or invalid
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError("scenario file not found", config_file=str(path))
    try:
        values = dotenv_values(path, encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigurationError(f"cannot read scenario: {e}", config_file=str(path)) from e

    config = parse_scenario(dict(values), source=str(path))
    logger.info(
        f"Loaded scenario {path.name}: n_BA={config.params.n_ba:.4g}, "
        f"t_end={config.t_end:.6g}, {config.grid_points} grid points"
    )
    return config
