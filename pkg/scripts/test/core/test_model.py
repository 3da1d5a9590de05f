"""
Tests for the physical and feedback model (scripts/core/model.py)

Tests cover:
- Parameter validation
- Back-action number and thermal occupation
- Piecewise-constant setpoints
- Covariance presets and initial states
- Weak-coupling variance formulas and the optimal derivative gain
- Monotonicity of the variance formulas in the gains
"""

import math

import numpy as np
import pytest

from scripts.core.exceptions import ValidationError
from scripts.core.model import (
    CovariancePreset,
    CovarianceState,
    ExternalForce,
    InitialState,
    PidParams,
    SetpointSignal,
    SystemParams,
    analytic_conditional_variances,
    analytic_unconditional_variances,
    back_action_number,
    optimal_derivative_gain,
    squeezing_bracket,
    squeezing_db,
    thermal_occupation,
)


class TestSystemParams:
    """Tests for SystemParams."""

    def test_back_action_number(self, reference_params):
        """Test n_BA = 2 G^2 / (gamma kappa) for the reference parameters."""
        assert reference_params.n_ba == pytest.approx(4.5, rel=1e-12)
        assert back_action_number(reference_params) == reference_params.n_ba

    def test_for_back_action(self):
        """Test building parameters from a target n_BA."""
        params = SystemParams.for_back_action(0.05, kappa=0.1, gamma=1e-5, n_th=1.0)
        assert params.n_ba == pytest.approx(0.05, rel=1e-12)
        assert params.thermal_variance == 1.5

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"kappa": 0.0, "gamma": 1e-5},
            {"kappa": 0.1, "gamma": -1e-5},
            {"kappa": 0.1, "gamma": 1e-5, "g": -1.0},
            {"kappa": 0.1, "gamma": 1e-5, "n_th": -0.1},
            {"kappa": math.nan, "gamma": 1e-5},
            {"kappa": 0.1, "gamma": 1e-5, "g": math.inf},
        ],
    )
    def test_invalid_params(self, kwargs):
        """Test that non-physical parameters are rejected."""
        with pytest.raises(ValidationError):
            SystemParams(**kwargs)


class TestSetpointSignal:
    """Tests for SetpointSignal."""

    def test_zero(self):
        """Test the default zero setpoint."""
        signal = SetpointSignal.zero()
        assert signal.is_zero
        assert signal.value(10.0) == 0.0
        assert signal.breakpoints() == []

    def test_step_at_origin(self):
        """Test a unit step switched on at t = 0."""
        signal = SetpointSignal.step()
        assert signal.value(0.0) == 1.0
        assert signal.value(-1.0) == 0.0
        assert signal.breakpoints() == []

    def test_delayed_step(self):
        """Test right-continuity and the jump at a delayed step."""
        signal = SetpointSignal.step(2.0, at=5.0)
        assert signal.value(4.999) == 0.0
        assert signal.value(5.0) == 2.0
        assert signal.jump(5.0) == 2.0
        assert signal.jump(4.0) == 0.0
        assert signal.breakpoints() == [5.0]
        assert signal.breakpoints(t_end=5.0) == []

    def test_integral(self):
        """Test the exact integral across segments."""
        signal = SetpointSignal(((0.0, 1.0), (2.0, -1.0), (5.0, 0.5)))
        assert signal.integral(1.0) == pytest.approx(1.0)
        assert signal.integral(4.0) == pytest.approx(2.0 - 2.0)
        assert signal.integral(7.0) == pytest.approx(2.0 - 3.0 + 1.0)

    def test_scaled(self):
        """Test rescaling the breakpoint times."""
        signal = SetpointSignal(((0.0, 0.0), (2.0, 1.0))).scaled(1e5)
        assert signal.segments == ((0.0, 0.0), (2e5, 1.0))

    def test_invalid_segments(self):
        """Test rejected segment layouts."""
        with pytest.raises(ValidationError):
            SetpointSignal(((1.0, 0.0),))
        with pytest.raises(ValidationError):
            SetpointSignal(((0.0, 0.0), (3.0, 1.0), (3.0, 2.0)))
        with pytest.raises(ValidationError):
            SetpointSignal(())


class TestPidParams:
    """Tests for PidParams."""

    def test_defaults(self):
        """Test the passive default: no feedback, mu = 1, zero setpoint."""
        pid = PidParams()
        assert pid.alpha_p == pid.alpha_i == pid.alpha_d == 0.0
        assert pid.mu == 1.0
        assert pid.setpoint.is_zero
        assert pid.derivative_factor == 1.0

    def test_derivative_gain_range(self):
        """Test that 1 + alpha_d must be positive."""
        assert PidParams(alpha_d=-0.5).derivative_factor == 0.5
        with pytest.raises(ValidationError):
            PidParams(alpha_d=-1.0)
        with pytest.raises(ValidationError):
            PidParams(alpha_p=-0.1)
        with pytest.raises(ValidationError):
            PidParams(alpha_i=-0.1)


class TestInitialState:
    """Tests for covariance presets."""

    def test_ground(self, reference_params):
        """Test the ground-state preset."""
        cov = InitialState().covariances(reference_params)
        assert cov == CovarianceState.ground()
        assert cov.v_q == cov.v_p == cov.v_xa == cov.v_ya == 0.5
        assert cov.v_yaq == 0.0

    def test_thermal(self):
        """Test the thermal preset uses n_th of the system."""
        params = SystemParams(kappa=0.1, gamma=1e-5, n_th=2.0)
        cov = InitialState(preset="thermal").covariances(params)
        assert cov.v_q == cov.v_p == 2.5
        assert cov.v_xa == cov.v_ya == 0.5

    def test_custom(self, reference_params):
        """Test the custom preset returns the given covariances."""
        custom = CovarianceState.from_array(np.arange(10, dtype=float))
        init = InitialState(preset=CovariancePreset.CUSTOM, custom=custom)
        assert init.covariances(reference_params) is custom
        with pytest.raises(ValidationError):
            InitialState(preset="custom")

    def test_array_round_trip(self):
        """Test CovarianceState packing order."""
        values = np.linspace(0.1, 1.0, 10)
        state = CovarianceState.from_array(values)
        assert state.v_q == values[0]
        assert state.v_yap == values[9]
        np.testing.assert_array_equal(state.as_array(), values)
        with pytest.raises(ValidationError):
            CovarianceState.from_array(values[:9])


class TestClosedForms:
    """Tests for the weak-coupling formulas and helpers."""

    def test_thermal_occupation(self):
        """Test Bose occupation limits."""
        assert thermal_occupation(0.0) == 0.0
        assert thermal_occupation(1.0) == pytest.approx(1.0 / (math.e - 1.0))
        assert thermal_occupation(1000.0) == pytest.approx(999.5, rel=1e-4)
        with pytest.raises(ValidationError):
            thermal_occupation(-1.0)

    def test_squeezing_db(self):
        """Test dB conversion relative to the zero-point variance."""
        assert squeezing_db(0.5) == 0.0
        assert squeezing_db(0.25) == pytest.approx(-3.0103, abs=1e-4)
        with pytest.raises(ValidationError):
            squeezing_db(0.0)

    def test_passive_unconditional_is_thermal(self):
        """Test that without feedback the unconditional Q variance stays thermal."""
        params = SystemParams.for_back_action(0.05, kappa=0.1, gamma=1e-5, n_th=1.0)
        vq, vp = analytic_unconditional_variances(params, PidParams())
        assert vq == pytest.approx(1.5)
        assert vp == pytest.approx(1.5 + 0.05)

    def test_conditional_independent_of_proportional_gain(self):
        """Test that only alpha_d enters the conditional variance."""
        params = SystemParams.for_back_action(0.02, kappa=0.1, gamma=1e-5)
        base = analytic_conditional_variances(params, PidParams(alpha_d=0.5))
        other = analytic_conditional_variances(
            params, PidParams(alpha_p=5.0, alpha_i=10.0, alpha_d=0.5)
        )
        assert base == other
        vq, _ = analytic_conditional_variances(params, PidParams())
        assert vq == pytest.approx(0.5 - 4 * 0.02 * 0.25)

    def test_optimal_derivative_gain(self):
        """Test that 1/(1 + 2 alpha_p) maximizes the squeezing bracket."""
        for alpha_p in (0.0, 1.0, 5.0):
            best = optimal_derivative_gain(alpha_p)
            sweep = np.linspace(0.0, 3.0, 3001)
            values = [squeezing_bracket(alpha_p, d) for d in sweep]
            assert sweep[int(np.argmax(values))] == pytest.approx(best, abs=2e-3)

    def test_bracket_limits(self):
        """Test the feedback bracket at simple points."""
        assert squeezing_bracket(0.0, 0.0) == 0.0
        assert squeezing_bracket(1.0, 0.0) == pytest.approx(0.5)
        assert squeezing_bracket(0.0, 1.0) == pytest.approx(0.25)
        assert squeezing_bracket(1e9, 0.0) == pytest.approx(1.0)

    def test_pd_improves_on_p(self):
        """Test that alpha_d = 1/3 beats alpha_d = 0 at alpha_p = 1."""
        params = SystemParams.for_back_action(0.02, kappa=0.1, gamma=1e-5)
        p_only, _ = analytic_unconditional_variances(params, PidParams(alpha_p=1.0))
        pd_loop, _ = analytic_unconditional_variances(
            params, PidParams(alpha_p=1.0, alpha_d=1.0 / 3.0)
        )
        assert pd_loop < p_only

    def test_proportional_gain_lowers_unconditional_variance(self):
        """Test V_Q falls monotonically with alpha_p when alpha_d = 0."""
        params = SystemParams.for_back_action(0.02, kappa=0.1, gamma=1e-5)
        gains = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]
        vq = [analytic_unconditional_variances(params, PidParams(alpha_p=p))[0] for p in gains]
        assert np.all(np.diff(vq) < 0)

    def test_conditional_variance_smallest_without_derivative_gain(self):
        """Test the conditional V_Q is lowest at alpha_d = 0 and grows with alpha_d."""
        params = SystemParams.for_back_action(0.02, kappa=0.1, gamma=1e-5)
        sweep = np.linspace(0.0, 1.0, 21)
        vq = [analytic_conditional_variances(params, PidParams(alpha_d=d))[0] for d in sweep]
        assert int(np.argmin(vq)) == 0
        assert np.all(np.diff(vq) > 0)


class TestExternalForce:
    """Tests for ExternalForce."""

    def test_zero_and_scaled(self):
        """Test zero detection and scaling."""
        assert ExternalForce().is_zero
        force = ExternalForce(1.0, -2.0).scaled(1e-5)
        assert force.f1 == pytest.approx(1e-5)
        assert force.f2 == pytest.approx(-2e-5)
        with pytest.raises(ValidationError):
            ExternalForce(math.nan, 0.0)
