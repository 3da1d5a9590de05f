"""
Command-line entry point.

Usage:
    pidsqueeze variances --config scenario.env [--out variances.csv]
    pidsqueeze track --config scenario.env
    pidsqueeze tune --overshoot 0.05 --settling-time 2 --gamma 1e-5
    pidsqueeze ensemble --config scenario.env --trajectories 2000 --seed 7
    pidsqueeze force --config scenario.env
    pidsqueeze steady --config scenario.env

Exit codes: 0 on success, 1 on configuration or validation errors, 2 on
numerical failures.
"""
import argparse
import logging
import sys
from typing import Optional, Sequence

from scripts.cli.commands import (
    cmd_ensemble,
    cmd_force,
    cmd_steady,
    cmd_track,
    cmd_tune,
    cmd_variances,
)
from scripts.cli.output import write_csv, write_summary
from scripts.cli.scenario import ScenarioConfig, load_scenario
from scripts.core.exceptions import (
    ConfigurationError,
    ConvergenceError,
    InstabilityError,
    IntegrationError,
    TrajectoryAbortError,
    UnreachableDesignError,
    ValidationError,
)
from scripts.core.logging import setup_logging
from scripts.utils.progress import ProgressTracker

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2

CONFIG_ERRORS = (ConfigurationError, ValidationError, UnreachableDesignError)
NUMERICAL_ERRORS = (IntegrationError, ConvergenceError, TrajectoryAbortError, InstabilityError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pidsqueeze",
        description="PID feedback squeezing of a mechanical quadrature",
    )
    parser.add_argument(
        "--log-level",
        type=str,
        default=None,
        help="Log level (default: QS_LOG_LEVEL or INFO)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("variances", "Conditional and unconditional variances over time"),
        ("track", "Setpoint tracking of the mean quadrature"),
        ("ensemble", "Monte Carlo check of the moment equations"),
        ("force", "Weak-force detectability"),
        ("steady", "Stationary variances against the weak-coupling formulas"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", type=str, required=True, help="Scenario file (KEY=VALUE)")
        sub.add_argument("--out", type=str, help="Output path (default: OUTPUT key or stdout)")
        sub.add_argument("--seed", type=int, help="Override the scenario SEED")
        sub.add_argument("--trajectories", type=int, help="Override the scenario TRAJECTORIES")
        if name == "ensemble":
            sub.add_argument(
                "--progress", action="store_true", help="Show a progress bar on stderr"
            )

    tune = subparsers.add_parser("tune", help="Design PID gains from step specifications")
    tune.add_argument("--config", type=str, help="Scenario file providing GAMMA")
    tune.add_argument("--out", type=str, help="Output path (default: stdout)")
    tune.add_argument(
        "--overshoot", type=float, required=True, help="Overshoot fraction R in (0, 1)"
    )
    tune.add_argument("--settling-time", type=float, required=True, help="Settling time T_p")
    tune.add_argument("--gamma", type=float, help="Mechanical damping rate")
    tune.add_argument(
        "--time-units",
        choices=("gamma", "absolute"),
        default="gamma",
        help="Units of --settling-time (default: gamma, i.e. multiples of 1/gamma)",
    )
    tune.add_argument("--alpha-d", type=float, default=0.0, help="Derivative gain (default: 0)")
    return parser


def _load(args: argparse.Namespace) -> ScenarioConfig:
    config = load_scenario(args.config)
    return config.with_overrides(
        seed=getattr(args, "seed", None), trajectories=getattr(args, "trajectories", None)
    )


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "tune":
        gamma = args.gamma
        if gamma is None:
            if not args.config:
                raise ConfigurationError("tune needs --gamma or a --config with GAMMA")
            gamma = load_scenario(args.config).params.gamma
        summary = cmd_tune(
            args.overshoot, args.settling_time, gamma, args.time_units, args.alpha_d
        )
        write_summary(summary, args.out)
        return

    config = _load(args)
    out = args.out or config.output
    resolved = config.resolved()

    if args.command == "variances":
        write_csv(cmd_variances(config), resolved, out)
    elif args.command == "track":
        frame, summary = cmd_track(config)
        write_csv(frame, resolved, out)
        write_summary(summary, stream=sys.stderr if out is None else None)
    elif args.command == "ensemble":
        progress = ProgressTracker(enabled=True, use_bar=True if args.progress else None)
        write_csv(cmd_ensemble(config, progress), resolved, out)
    elif args.command == "force":
        write_summary(cmd_force(config), out)
    elif args.command == "steady":
        write_csv(cmd_steady(config), resolved, out)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and map failures to exit codes.

    Args:
        argv: Argument list (defaults to sys.argv[1:])

    Returns:
        Process exit code
    """
    args = build_parser().parse_args(argv)
    setup_logging("scripts", level=args.log_level, capture_warnings=True)

    try:
        _dispatch(args)
    except CONFIG_ERRORS as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_CONFIG
    return EXIT_OK


def main():
    """Main entry point for the pidsqueeze command."""
    sys.exit(run())


if __name__ == "__main__":
    main()
