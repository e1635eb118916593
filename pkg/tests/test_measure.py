import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fdlkg import ConfigurationError, FieldState, NoiseSpec, RngStream, energy, g1
from fdlkg import measure
from fdlkg.measure import BumpFunction, _g1_hessian_trace, _g1_quadratic_form, g1_gradient
from fdlkg.properties import random_states


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5), st.floats(0.05, 2), st.floats(-1, 8))
def test_bump_antiderivative_matches_quad(center, width, x):
    b = BumpFunction(center, width)
    ref, _ = quad(b.h, 0.0, x, points=[center - width, center, center + width], epsabs=1e-14,
                  limit=200)
    assert b.H(x) == pytest.approx(ref, abs=1e-12)


def test_bump_support_and_mass():
    b = BumpFunction(2.0, 0.5, amplitude=3.0, sign=-1)
    assert b.h(1.5) == 0 and b.h(2.5) == 0 and b.h(2.0) == pytest.approx(-3 * np.exp(-1))
    assert b.H(0.0) == 0 and b.H(10.0) == pytest.approx(b.mass, rel=1e-13)
    ref, _ = quad(lambda s: np.exp(-1 / (1 - s * s)), -1, 1, epsabs=1e-15)
    assert b.mass == pytest.approx(-3 * 0.5 * ref, rel=1e-12)
    with pytest.raises(ConfigurationError):
        BumpFunction(1.0, 0.0)


def test_g1_gradient_and_hessian_by_finite_differences(small_torus, rng):
    b = small_torus
    y = random_states(b, 1, rng, max_log_amplitude=0.3)[0]
    alpha = 0.3
    gu, gv = g1_gradient(y.u, y.v, alpha, b)
    eps = 1e-6
    for j in (0, 3, 6):
        e = np.eye(b.N)[j] * eps
        fd_u = (g1(FieldState(y.u + e, y.v), alpha, b) - g1(FieldState(y.u - e, y.v), alpha, b)) / (2 * eps)
        fd_v = (g1(FieldState(y.u, y.v + e), alpha, b) - g1(FieldState(y.u, y.v - e), alpha, b)) / (2 * eps)
        assert fd_u == pytest.approx(gu[j], rel=1e-6, abs=1e-8)
        assert fd_v == pytest.approx(gv[j], rel=1e-6, abs=1e-8)
    # quadratic form: second difference along a random direction
    xu, xv = rng.standard_normal((2, b.N)) * 0.1
    h = 1e-4
    f = lambda t: g1(FieldState(y.u + t * xu, y.v + t * xv), alpha, b)
    fd2 = (f(h) - 2 * f(0) + f(-h)) / h ** 2
    assert _g1_quadratic_form(y.u, xu, xv, alpha, b) == pytest.approx(fd2, rel=1e-5)
    # trace of H Q for diagonal-by-mode Q equals the sum of quadratic forms
    q00, q11 = rng.uniform(0, 1, (2, b.N))
    q01 = 0.3 * np.sqrt(q00 * q11)
    ref = 0.0
    for j in range(b.N):
        L = np.linalg.cholesky(np.array([[q00[j], q01[j]], [q01[j], q11[j]]]))
        for c in range(2):
            xu_ = np.eye(b.N)[j] * L[0, c]
            xv_ = np.eye(b.N)[j] * L[1, c]
            ref += _g1_quadratic_form(y.u, xu_, xv_, alpha, b)
    assert _g1_hessian_trace(y.u, q00, q01, q11, alpha, b) == pytest.approx(ref, rel=1e-12)


def test_balance_l1_status_flags(small_torus):
    noise = NoiseSpec.inverse_sq(small_torus)
    y = FieldState(np.zeros((1, 10, small_torus.N)), np.zeros((1, 10, small_torus.N)))
    out = measure.check_balance_l1(y, noise, small_torus)
    assert out["status"] == "inconclusive" and not out["passed"]
    with pytest.raises(TypeError):
        measure.check_balance_l1(np.zeros(3), noise, small_torus)


def test_density_report_and_atoms(small_torus, rng):
    y = random_states(small_torus, 20000, rng, max_log_amplitude=-1.0)
    y = FieldState(rng.standard_normal((20000, small_torus.N)) * 0.3, y.v)
    rep = measure.hamiltonian_density_report(y, small_torus, bins=16)
    assert rep["atom_count"] == 0 and rep["halving"]
    assert len(rep["histograms"]) == 3 and all(h.total == 20000 for h in rep["histograms"])
    z = FieldState(np.zeros((5, small_torus.N)), y.v[:5])
    assert measure.hamiltonian_density_report(z, small_torus)["atom_count"] == 5


def test_tail_sigma_and_rejection(torus1, noise1):
    s = measure.tail_sigma(2.0, torus1, noise1)
    assert s == pytest.approx((2 / 3) / (4 * np.e * noise1.A0))
    with pytest.raises(ConfigurationError):
        measure.tail_sigma(1.0, torus1, noise1)


def test_accumulate_stream(small_torus, rng):
    ys = [random_states(small_torus, 10, rng) for _ in range(3)]
    acc = measure.accumulate(ys, {"E": lambda y: energy(y, small_torus)}, p_max=2)
    allE = np.concatenate([energy(y, small_torus) for y in ys])
    assert acc["E"].count == 30 and acc["E"].mean == pytest.approx(allE.mean())


def test_ito_check_small_ensemble(torus1, noise1):
    y0 = FieldState(np.r_[0.5, 0.3, -0.2, np.zeros(torus1.N - 3)], np.zeros(torus1.N))
    out = measure.check_ito_identity_g1(y0, 0.3, 0.8, 64, noise1, torus1, 0.08, RngStream(1))
    assert out["residual"].shape[0] == 3 and out["level_dts"] == [0.08, 0.04, 0.02]
    assert out["within_error"]
    with pytest.raises(ConfigurationError):
        measure.check_ito_identity_g1(y0, 0.3, 0.8, 8, noise1, torus1, 0.08, RngStream(1), levels=2)


def test_sweep_rejects_bad_alphas(torus1, noise1):
    from fdlkg import RunSpec
    with pytest.raises(ConfigurationError):
        measure.alpha_sweep([0.1, 0.2], noise1, torus1, RunSpec(T=10, dt=0.1), RngStream(0))
    with pytest.raises(ConfigurationError):
        measure.alpha_sweep([1.5], noise1, torus1, RunSpec(T=10, dt=0.1), RngStream(0))


def test_zero_bump_gives_zero_residual(small_torus, rng):
    noise = NoiseSpec.inverse_sq(small_torus)
    y = random_states(small_torus, 200, rng)
    out = measure.check_balance_identity(y, BumpFunction(1.0, 0.5, amplitude=0.0), noise, small_torus)
    assert all(v["mean"] == 0 for v in out["variants"].values()) and out["passed"]
