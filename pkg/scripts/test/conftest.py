"""
pytest configuration for pidsqueeze tests.
Sets up the Python path and shared parameter sets.
"""

import sys
from pathlib import Path

import pytest

# Add the repository root to Python path
# This allows imports like 'from scripts.core.model import ...' to work
repo_root = Path(__file__).parent.parent.parent
sys.path.insert(0, str(repo_root))

from scripts.core.model import SystemParams  # noqa: E402
from scripts.filtering.integration import IntegratorSettings  # noqa: E402


@pytest.fixture
def reference_params() -> SystemParams:
    """kappa = 0.1, gamma = 1e-5, G = 1.5e-3 (n_BA = 4.5)."""
    return SystemParams(kappa=0.1, gamma=1e-5, g=1.5e-3, n_th=0.0)


@pytest.fixture
def desk_params() -> SystemParams:
    """Faster mechanics (kappa / gamma = 100) for long or stochastic runs."""
    return SystemParams.for_back_action(0.02, kappa=0.1, gamma=1e-3)


@pytest.fixture
def stiff_settings() -> IntegratorSettings:
    """LSODA for horizons of many mechanical damping times."""
    return IntegratorSettings(method="LSODA")
