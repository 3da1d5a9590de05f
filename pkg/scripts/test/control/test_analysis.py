"""
Tests for closed-loop analysis and PID synthesis (scripts/control/analysis.py)

Tests cover:
- Transfer-function coefficients, poles and zeros
- Final values, including the cancelled pole at the origin
- Exact step responses: overshoot, settling time, monotonic P control
- Gain synthesis from overshoot and settling time
- Unreachable and invalid specifications
"""

import math
import warnings

import numpy as np
import pytest
from scipy import signal

from scripts.control.analysis import (
    ClosedLoopTf,
    StepSpecs,
    design_targets,
    final_value,
    poles_and_zeros,
    predicted_overshoot,
    predicted_settling_time,
    second_order_characteristics,
    step_metrics,
    step_response,
    transfer_function,
    tune_pid,
)
from scripts.core.exceptions import InstabilityError, UnreachableDesignError, ValidationError
from scripts.core.model import PidParams, SystemParams

GAMMA = 1e-5


@pytest.fixture
def params() -> SystemParams:
    return SystemParams(kappa=0.1, gamma=GAMMA)


class TestTransferFunction:
    """Tests for transfer_function and its poles."""

    def test_proportional(self, params):
        """Test alpha_p = 10: poles {0, -5.5 gamma}, final value 10/11."""
        tf = transfer_function(params, PidParams(alpha_p=10.0))
        assert tf.b1 == pytest.approx(5.0 * GAMMA)
        assert tf.b0 == 0.0
        assert tf.a0 == 0.0
        poles, _ = poles_and_zeros(tf)
        np.testing.assert_allclose(sorted(poles.real), [-5.5 * GAMMA, 0.0], atol=1e-18)
        assert final_value(tf) == pytest.approx(10.0 / 11.0)

    def test_no_feedback(self, params):
        """Test alpha = 0 gives a zero numerator and final value 0."""
        tf = transfer_function(params, PidParams())
        assert tf.is_zero
        assert final_value(tf) == 0.0
        _, zeros = poles_and_zeros(tf)
        assert zeros.size == 0

    def test_pi_denominator(self, params):
        """Test alpha_p = 7, alpha_i = 33.6, mu = 0: s^2 + 4 gamma s + 8.4 gamma^2."""
        tf = transfer_function(params, PidParams(alpha_p=7.0, alpha_i=33.6, mu=0.0))
        np.testing.assert_allclose(tf.denominator, [1.0, 4.0 * GAMMA, 8.4 * GAMMA**2])
        np.testing.assert_allclose(tf.numerator, [0.0, 8.4 * GAMMA**2])
        assert final_value(tf) == pytest.approx(1.0)

    def test_setpoint_weight_keeps_poles(self, params):
        """Test mu changes the zero but not the poles."""
        gains = dict(alpha_p=7.0, alpha_i=33.6, alpha_d=0.5)
        poles_a, zeros_a = poles_and_zeros(transfer_function(params, PidParams(mu=0.2, **gains)))
        poles_b, zeros_b = poles_and_zeros(transfer_function(params, PidParams(mu=1.0, **gains)))
        np.testing.assert_allclose(np.sort_complex(poles_a), np.sort_complex(poles_b))
        assert not np.allclose(zeros_a, zeros_b)

    def test_derivative_gain_scales_denominator(self, params):
        """Test alpha_d enters as the leading coefficient 1 + alpha_d."""
        tf = transfer_function(params, PidParams(alpha_p=1.0, alpha_d=0.5))
        assert tf.a2 == 1.5

    def test_characteristics(self, params):
        """Test damping ratio and natural frequency of the PI loop."""
        tf = transfer_function(params, PidParams(alpha_p=7.0, alpha_i=33.6, mu=0.0))
        zeta, omega_n = second_order_characteristics(tf)
        assert omega_n == pytest.approx(math.sqrt(8.4) * GAMMA)
        assert zeta == pytest.approx(2.0 / math.sqrt(8.4))
        with pytest.raises(ValidationError):
            second_order_characteristics(transfer_function(params, PidParams(alpha_p=1.0)))

    def test_unstable_final_value(self):
        """Test a right half-plane pole has no final value."""
        tf = ClosedLoopTf(b1=0.0, b0=1.0, a2=1.0, a1=-1.0, a0=1.0)
        with pytest.raises(InstabilityError):
            final_value(tf)

    def test_invalid_coefficients(self):
        """Test non-finite coefficients and a non-positive a2 are rejected."""
        with pytest.raises(ValidationError):
            ClosedLoopTf(b1=math.nan, b0=0.0, a2=1.0, a1=1.0, a0=0.0)
        with pytest.raises(ValidationError):
            ClosedLoopTf(b1=0.0, b0=0.0, a2=0.0, a1=1.0, a0=0.0)


class TestStepResponse:
    """Tests for step_response and step_metrics."""

    def test_designed_pi_loop(self, params):
        """Test 5% overshoot and settling near 2/gamma without the zero."""
        tf = transfer_function(params, PidParams(alpha_p=7.0, alpha_i=33.6, mu=0.0))
        grid = np.linspace(0.0, 10.0 / GAMMA, 4001)
        response = step_response(tf, grid)
        assert response.final_value == pytest.approx(1.0)
        assert response.overshoot == pytest.approx(0.05, abs=0.005)
        assert response.settling_time == pytest.approx(2.0 / GAMMA, rel=0.05)

    def test_zero_raises_overshoot(self, params):
        """Test mu = 1 adds a zero and more overshoot."""
        tf = transfer_function(params, PidParams(alpha_p=7.0, alpha_i=33.6, mu=1.0))
        response = step_response(tf, np.linspace(0.0, 10.0 / GAMMA, 4001))
        assert response.overshoot > 0.055

    def test_no_zero_realizes_cleanly(self, params):
        """Test mu = 0 (numerator [0, b0]) builds the realization without BadCoefficients."""
        tf = transfer_function(params, PidParams(alpha_p=7.0, alpha_i=33.6, mu=0.0))
        with warnings.catch_warnings():
            warnings.simplefilter("error", signal.BadCoefficients)
            response = step_response(tf, np.linspace(0.0, 10.0 / GAMMA, 101))
        assert response.values[0] == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.isfinite(response.values))

    def test_proportional_is_monotone(self, params):
        """Test P-only control rises monotonically to 10/11."""
        tf = transfer_function(params, PidParams(alpha_p=10.0))
        response = step_response(tf, np.linspace(0.0, 5.0 / GAMMA, 501))
        assert np.all(np.diff(response.values) >= -1e-12)
        assert response.overshoot == 0.0
        assert response.values[-1] == pytest.approx(10.0 / 11.0, rel=1e-6)

    def test_long_time_limit(self, params):
        """Test the response approaches the final value."""
        tf = transfer_function(params, PidParams(alpha_p=7.0, alpha_i=33.6, alpha_d=0.3))
        response = step_response(tf, [0.0, 40.0 / GAMMA])
        assert response.values[0] == pytest.approx(0.0, abs=1e-12)
        assert response.values[-1] == pytest.approx(final_value(tf), abs=1e-6)

    def test_no_feedback_response(self, params):
        """Test alpha = 0 gives a flat response that counts as settled."""
        response = step_response(transfer_function(params, PidParams()), [0.0, 1.0, 2.0])
        np.testing.assert_array_equal(response.values, 0.0)
        assert response.overshoot == 0.0
        assert response.settling_time == 0.0

    def test_unstable_response(self):
        """Test an unstable loop reports NaN metrics."""
        tf = ClosedLoopTf(b1=0.0, b0=1.0, a2=1.0, a1=-0.1, a0=1.0)
        response = step_response(tf, np.linspace(0.0, 10.0, 11))
        assert math.isnan(response.final_value)
        assert math.isnan(response.settling_time)

    def test_invalid_grid(self, params):
        """Test a decreasing grid is rejected."""
        with pytest.raises(ValidationError):
            step_response(transfer_function(params, PidParams(alpha_p=1.0)), [1.0, 0.0])

    def test_step_metrics(self):
        """Test overshoot and interpolated band exit on a sampled signal."""
        times = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        values = np.array([0.0, 1.1, 0.97, 1.01, 1.0])
        overshoot, settling = step_metrics(times, values, 1.0)
        assert overshoot == pytest.approx(0.1)
        # |e| - band: 0.01 at t = 2, -0.01 at t = 3
        assert settling == pytest.approx(2.5)
        _, unsettled = step_metrics(times, np.array([0.0, 0.5, 0.7, 0.8, 0.9]), 1.0)
        assert math.isnan(unsettled)


class TestTunePid:
    """Tests for tune_pid and the design helpers."""

    def test_five_percent_two_damping_times(self):
        """Test R = 0.05, T_p = 2/gamma gives alpha_p = 7, alpha_i = 33.6."""
        pid = tune_pid(StepSpecs(0.05, 2.0 / GAMMA), GAMMA)
        assert pid.alpha_p == pytest.approx(7.0, abs=0.05)
        assert pid.alpha_i == pytest.approx(33.6, abs=0.2)
        assert pid.alpha_d == 0.0
        assert pid.mu == 0.0

    def test_slower_settling(self):
        """Test R = 0.05, T_p = 4/gamma gives alpha_p = 3, alpha_i = 8.4."""
        pid = tune_pid(StepSpecs(0.05, 4.0 / GAMMA), GAMMA)
        assert pid.alpha_p == pytest.approx(3.0, abs=0.05)
        assert pid.alpha_i == pytest.approx(8.4, abs=0.1)

    def test_design_meets_specs(self, params):
        """Test the synthesized loop meets its own specifications."""
        specs = StepSpecs(0.1, 3.0 / GAMMA)
        pid = tune_pid(specs, GAMMA, alpha_d=0.5)
        response = step_response(
            transfer_function(params, pid), np.linspace(0.0, 15.0 / GAMMA, 6001)
        )
        assert response.overshoot == pytest.approx(0.1, abs=0.01)
        # Band exit comes before the 4 / (zeta omega_n) estimate at this damping
        assert 2.0 / GAMMA < response.settling_time <= 3.0 / GAMMA
        zeta, omega_n = design_targets(specs)
        assert predicted_overshoot(zeta) == pytest.approx(0.1)
        assert predicted_settling_time(zeta, omega_n) == pytest.approx(3.0 / GAMMA)

    def test_unreachable(self):
        """Test settling slower than 16 (1 + alpha_d) / gamma needs alpha_p < 0."""
        with pytest.raises(UnreachableDesignError):
            tune_pid(StepSpecs(0.05, 20.0 / GAMMA), GAMMA)
        assert tune_pid(StepSpecs(0.05, 20.0 / GAMMA), GAMMA, alpha_d=0.5).alpha_p > 0

    def test_overshoot_near_one(self):
        """Test the integral gain grows as R approaches 1."""
        gains = [tune_pid(StepSpecs(r, 2.0 / GAMMA), GAMMA).alpha_i for r in (0.5, 0.9, 0.99)]
        assert gains[0] < gains[1] < gains[2]

    @pytest.mark.parametrize("overshoot", [0.0, 1.0, -0.1, 1.5])
    def test_invalid_overshoot(self, overshoot):
        """Test R outside (0, 1) is rejected."""
        with pytest.raises(ValidationError):
            StepSpecs(overshoot, 2.0 / GAMMA)

    def test_invalid_settling_time(self):
        """Test a non-positive settling time is rejected."""
        with pytest.raises(ValidationError):
            StepSpecs(0.05, 0.0)

    def test_predictions(self):
        """Test classical second-order formulas at the limits."""
        assert predicted_overshoot(1.2) == 0.0
        assert predicted_overshoot(0.0) == 1.0
        assert predicted_settling_time(0.0, 1.0) == math.inf
