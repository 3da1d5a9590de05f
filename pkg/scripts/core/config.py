"""
PidSqueeze Configuration
Centralized numerical and runtime settings, overridable from the environment.
"""

import os
from dotenv import load_dotenv
from pathlib import Path

# Load from .env file with UTF-8 encoding (Windows compatibility)
env_path = Path(__file__).parent.parent.parent / ".env"
load_dotenv(dotenv_path=env_path, encoding="utf-8")

# =============================================================================
# ODE Integrator Configuration
# =============================================================================
# Any adaptive method accepted by scipy.integrate.solve_ivp
ODE_METHOD = os.getenv("QS_ODE_METHOD", "RK45")
ODE_RTOL = float(os.getenv("QS_RTOL", "1e-8"))
ODE_ATOL = float(os.getenv("QS_ATOL", "1e-10"))

# Steady state: long-time integration horizon in units of 1/gamma, then Newton refinement
STEADY_HORIZON = float(os.getenv("QS_STEADY_HORIZON", "40"))
# Max |rhs| accepted for a stationary point, relative to kappa
STEADY_TOL = float(os.getenv("QS_STEADY_TOL", "1e-10"))
# Max relative disagreement between the integrated and the Newton stationary point
STEADY_AGREEMENT = float(os.getenv("QS_STEADY_AGREEMENT", "1e-6"))

# =============================================================================
# Monte Carlo Configuration
# =============================================================================
# Euler-Maruyama step as a fraction of the cavity time 1/kappa
DT_FRACTION = float(os.getenv("QS_DT_FRACTION", "0.01"))
ENSEMBLE_BATCH = int(os.getenv("QS_ENSEMBLE_BATCH", "500"))
# Wiener increments drawn per generator call
NOISE_BLOCK = int(os.getenv("QS_NOISE_BLOCK", "1024"))
ABORT_FRACTION = float(os.getenv("QS_ABORT_FRACTION", "0.001"))
THREADS = int(os.getenv("QS_THREADS", str(os.cpu_count() or 1)))

# =============================================================================
# Control Analysis Configuration
# =============================================================================
SETTLING_BAND = float(os.getenv("QS_SETTLING_BAND", "0.02"))

# =============================================================================
# Output Configuration
# =============================================================================
CSV_DIGITS = int(os.getenv("QS_CSV_DIGITS", "12"))

# =============================================================================
# Logging Configuration
# =============================================================================
LOG_LEVEL = os.getenv("QS_LOG_LEVEL", "INFO")
# Optional log file, written in addition to stderr
LOG_FILE = os.getenv("QS_LOG_FILE")
LOG_DIR = os.getenv("QS_LOG_DIR", "logs")

# =============================================================================
# Progress Bar Configuration
# =============================================================================
PROGRESS_BAR_ENABLED = os.getenv("QS_PROGRESS_BAR", "false").lower() == "true"


def csv_float_format() -> str:
    """Get the printf-style float format used for CSV output."""
    return f"%.{CSV_DIGITS}g"


# Configuration class for type safety
class Config:
    """Configuration class for type-safe access to settings."""

    # Integrator
    ode_method: str = ODE_METHOD
    ode_rtol: float = ODE_RTOL
    ode_atol: float = ODE_ATOL
    steady_horizon: float = STEADY_HORIZON
    steady_tol: float = STEADY_TOL
    steady_agreement: float = STEADY_AGREEMENT

    # Monte Carlo
    dt_fraction: float = DT_FRACTION
    ensemble_batch: int = ENSEMBLE_BATCH
    noise_block: int = NOISE_BLOCK
    abort_fraction: float = ABORT_FRACTION
    threads: int = THREADS

    # Control
    settling_band: float = SETTLING_BAND

    # Output
    csv_digits: int = CSV_DIGITS

    # Logging
    log_level: str = LOG_LEVEL
    log_file: str | None = LOG_FILE
    log_dir: str = LOG_DIR

    # Progress
    progress_bar_enabled: bool = PROGRESS_BAR_ENABLED


# Export configuration instance
config = Config()


def get_settings() -> Config:
    """Get the configuration instance."""
    return config
