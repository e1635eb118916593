import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from fdlkg import (ConfigurationError, FieldState, IntegrationBlowup, StepperConfig, energy, evolve,
                   norm_sq)
from fdlkg.deterministic import DeterministicStepper, LinearFlow, n_steps, propagator
from fdlkg.properties import random_states


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 400.0), st.floats(0.0, 1.0), st.floats(0.0, 2.0), st.booleans())
def test_propagator_matches_expm(w2, alpha, h, backward):
    # backward steps are only taken by the undamped flow
    if backward:
        alpha, h = 0.0, -h
    A = np.array([[0.0, 1.0], [-w2, -alpha * w2]])
    ref = expm(A * h)
    got = np.array(propagator(w2, alpha, h)).reshape(2, 2)
    scale = max(1.0, np.max(np.abs(ref)))
    assert np.max(np.abs(got - ref)) <= 1e-12 * scale


@pytest.mark.parametrize("w2, alpha", [(4.0, 1.0), (1.0, 2.0), (100.0, 0.2)])
def test_propagator_critical_and_overdamped(w2, alpha):
    A = np.array([[0.0, 1.0], [-w2, -alpha * w2]])
    for h in (1e-6, 0.01, 0.7, 5.0):
        np.testing.assert_allclose(np.array(propagator(w2, alpha, h)).reshape(2, 2),
                                   expm(A * h), rtol=1e-12, atol=1e-15)


def test_linear_flow_semigroup(torus1):
    f1 = LinearFlow(torus1.omega_sq, 0.3, 0.1)
    f2 = LinearFlow(torus1.omega_sq, 0.3, 0.2)
    u, v = np.ones(torus1.N), np.linspace(-1, 1, torus1.N)
    np.testing.assert_allclose(f1(*f1(u, v)), f2(u, v), rtol=1e-13, atol=1e-15)


def test_strang_time_reversible(torus1, rng):
    y = random_states(torus1, 4, rng, max_log_amplitude=0.5)
    s = DeterministicStepper(StepperConfig(0.03), torus1)
    back = s.step_back(s.step(y))
    np.testing.assert_allclose(back.u, y.u, atol=1e-13)
    np.testing.assert_allclose(back.v, y.v, atol=1e-13)


def _error(scheme, dt, y0, basis, T=1.0):
    ref, _ = evolve(y0, T, StepperConfig(1e-4, "strang"), basis)
    out, _ = evolve(y0, T, StepperConfig(dt, scheme), basis)
    return np.max(np.abs(out.u - ref.u)) + np.max(np.abs(out.v - ref.v))


@pytest.mark.parametrize("scheme, order", [("lie", 1), ("strang", 2)])
def test_convergence_order(scheme, order, small_torus):
    y0 = FieldState(np.r_[1.0, 0.5, -0.3, np.zeros(small_torus.N - 3)], np.zeros(small_torus.N))
    e1 = _error(scheme, 0.02, y0, small_torus)
    e2 = _error(scheme, 0.01, y0, small_torus)
    assert np.log2(e1 / e2) == pytest.approx(order, abs=0.2)


def test_damped_linear_energy_decreases(torus1, rng):
    y = random_states(torus1, 8, rng)
    _, traj = evolve(y, 5.0, StepperConfig(0.05, "strang", 0.3), torus1,
                     {"E": lambda z: norm_sq(z, 1, 0, torus1)}, nonlinear=False)
    E = np.asarray(traj.values["E"])
    assert np.all(np.diff(E, axis=0) <= 1e-14 * E[:-1])


def test_evolve_adjusts_step_to_hit_T(small_torus):
    y0 = FieldState(np.ones(small_torus.N) * 0.1, np.zeros(small_torus.N))
    _, traj = evolve(y0, 1.0, StepperConfig(0.3), small_torus, {"E": lambda z: energy(z, small_torus)})
    assert traj.times[-1] == pytest.approx(1.0, rel=1e-14)
    assert n_steps(1.0, 0.3) == 4 and n_steps(0.0, 0.3) == 0


def test_trajectory_csv(tmp_path, small_torus):
    y0 = FieldState(np.ones(small_torus.N) * 0.1, np.zeros(small_torus.N))
    _, traj = evolve(y0, 0.2, StepperConfig(0.1), small_torus, {"E": lambda z: energy(z, small_torus)})
    traj.write_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "time,observable,value" and len(lines) == 4


def test_blowup_detected(small_torus):
    y0 = FieldState(np.full(small_torus.N, 30.0), np.zeros(small_torus.N))
    with pytest.raises(IntegrationBlowup):
        evolve(y0, 10.0, StepperConfig(0.5, "lie"), small_torus)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        StepperConfig(0.0)
    with pytest.raises(ConfigurationError):
        StepperConfig(0.1, "rk4")
    with pytest.raises(ConfigurationError):
        StepperConfig(0.1, "lie", -0.1)
