import numpy as np
import pytest

from fdlkg import ConfigurationError, FieldState, energy
from fdlkg import ergodic
from fdlkg.ergodic import PhaseSet
from fdlkg.properties import random_states


@pytest.fixture
def states(small_torus):
    return random_states(small_torus, 40, np.random.default_rng(3), max_log_amplitude=0.0)


def test_phase_sets(states, small_torus):
    assert PhaseSet.full().contains(states, small_torus).all()
    assert not PhaseSet.empty().contains(states, small_torus).any()
    E = energy(states, small_torus)
    band = PhaseSet.energy_band(np.median(E), np.inf)
    assert band.contains(states, small_torus).sum() == 20
    ball = PhaseSet.ball(states[0], 1e-9)
    assert ball.contains(states, small_torus)[0]
    with pytest.raises(ConfigurationError):
        PhaseSet.ball(states[0], -1)
    with pytest.raises(ConfigurationError):
        PhaseSet.energy_band(2, 1)


def test_birkhoff_of_conserved_quantity(states, small_torus):
    y0 = states[:3]
    out = ergodic.birkhoff_average(lambda y: energy(y, small_torus), y0, 2.0, 0.005, small_torus)
    np.testing.assert_allclose(out["average"], energy(y0, small_torus), rtol=1e-4)
    assert out["partial"].shape == (8, 3)


def test_correlation_with_full_set_equals_mu(states, small_torus):
    out = ergodic.correlation_average(PhaseSet.full(), PhaseSet.full(), states, 0.5, 0.05, small_torus)
    assert out["estimate"] == 1.0 and out["mu_A"] == 1.0 and out["above_lower_bound"]
    empty = ergodic.correlation_average(PhaseSet.empty(), PhaseSet.full(), states, 0.5, 0.05, small_torus)
    assert empty["estimate"] == 0.0


def test_recurrence_empty_set_inconclusive(states, small_torus):
    out = ergodic.recurrence_check(PhaseSet.empty(), states, 1.0, 0.05, small_torus)
    assert out["status"] == "inconclusive"


def test_linear_return_times_are_periods(small_torus):
    # one mode with omega = 1 returns exactly every 2 pi under the linear flow
    u = np.zeros(small_torus.N)
    u[0] = 1.0
    y = FieldState(u, np.zeros(small_torus.N))
    t = ergodic.return_times(y, 0.02, 1, 0, 13.0, 0.01, small_torus, nonlinear=False)
    np.testing.assert_allclose(t, [2 * np.pi, 4 * np.pi], atol=0.01)


def test_energy_drift_second_order(small_torus):
    y0 = FieldState(np.r_[0.8, 0.4, -0.3, np.zeros(small_torus.N - 3)], np.zeros(small_torus.N))
    out = ergodic.energy_drift_check(y0, 10.0, 0.1, small_torus, tol=1e-5)
    assert out["within_tol"] and out["passed"]
    assert 3.5 <= out["ratio"] <= 4.5
