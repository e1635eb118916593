"""Closed-form law of the linear damped-driven Klein-Gordon modes.

Each mode obeys ``dz = A z dt + sqrt(alpha) a e_2 dbeta`` with
``A = [[0, 1], [-w^2, -alpha w^2]]``.  Its law stays Gaussian: the mean is
carried by ``exp(A h)`` and the covariance by
``Sigma <- T Sigma T' + Q_h`` where
``Q_h = int_0^h exp(A s) diag(0, alpha a^2) exp(A s)' ds``.

``Q_h`` is evaluated from the eigen-decomposition of ``A``; within
``|alpha^2 w^2 - 4| < 1e-3`` of the double root the eigenvector formulas
cancel badly, and a Taylor series in the defect ``q = w^2 - (alpha w^2/2)^2``
is used instead.  Neither route shares code with the integrator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import expm
from scipy.special import gammainc, gammaln

from .errors import ConfigurationError
from .stats import mean_with_se

NEAR_CRITICAL = 1e-3
SERIES_TERMS = 4


@dataclass(frozen=True)
class ModeGaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(2)
        cov = np.asarray(self.cov, dtype=float).reshape(2, 2)
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("mode law must be finite")
        cov = 0.5 * (cov + cov.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.cov)[0])

    def push(self, T, Q):
        return ModeGaussian(T @ self.mean, T @ self.cov @ T.T + Q)


def drift_matrix(omega, alpha):
    w2 = float(omega) ** 2
    return np.array([[0.0, 1.0], [-w2, -alpha * w2]])


def _phi(x, h):
    """``(exp(x h) - 1) / x`` with the removable singularity filled."""
    x = complex(x)
    if abs(x * h) < 1e-300:
        return complex(h)
    return np.expm1(x * h) / x


def _eigen_route(w2, alpha, sig2, h):
    s = np.sqrt(complex(alpha * alpha * w2 * w2 - 4 * w2))
    if s.real < 0:
        s = -s
    mu1 = (-alpha * w2 - s) / 2
    mu2 = w2 / mu1  # product of the roots is w^2
    e1, e2 = np.exp(mu1 * h), np.exp(mu2 * h)
    d = mu2 - mu1
    T = np.array([[mu2 * e1 - mu1 * e2, e2 - e1],
                  [mu1 * mu2 * (e1 - e2), mu2 * e2 - mu1 * e1]]) / d
    f11, f12, f22 = _phi(2 * mu1, h), _phi(mu1 + mu2, h), _phi(2 * mu2, h)
    c = sig2 / (d * d)
    q00 = c * (f11 - 2 * f12 + f22)
    q01 = c * (mu1 * f11 - (mu1 + mu2) * f12 + mu2 * f22)
    q11 = c * (mu1 * mu1 * f11 - 2 * mu1 * mu2 * f12 + mu2 * mu2 * f22)
    Q = np.array([[q00, q01], [q01, q11]])
    return T.real, Q.real


def _moment_integrals(n_max, b, h):
    """``I_n = int_0^h s^n exp(-2 b s) ds`` for n = 0..n_max."""
    n = np.arange(n_max + 1)
    if b * h < 1e-300:
        return h ** (n + 1) / (n + 1)
    x = 2 * b * h
    return gammainc(n + 1, x) * np.exp(gammaln(n + 1) - (n + 1) * np.log(2 * b))


def _series_route(w2, alpha, sig2, h):
    b = 0.5 * alpha * w2
    q = w2 - b * b
    P = np.polynomial.Polynomial
    # C(s) = sum (-q)^k s^2k/(2k)!,  S(s) = sum (-q)^k s^(2k+1)/(2k+1)!
    Cc = np.zeros(2 * SERIES_TERMS)
    Sc = np.zeros(2 * SERIES_TERMS)
    for k in range(SERIES_TERMS):
        Cc[2 * k] = (-q) ** k / math.factorial(2 * k)
        Sc[2 * k + 1] = (-q) ** k / math.factorial(2 * k + 1)
    C, S = P(Cc), P(Sc)
    decay = math.exp(-b * h)
    Ch, Sh = C(h), S(h)
    T = decay * np.array([[Ch + b * Sh, Sh], [-w2 * Sh, Ch - b * Sh]])
    # exp(A s) e_2 = exp(-b s) [S, C - b S]
    col0, col1 = S, C - b * S
    polys = (col0 * col0, col0 * col1, col1 * col1)
    n_max = max(p.degree() for p in polys)
    I = _moment_integrals(n_max, b, h)
    vals = [sig2 * float(np.dot(p.coef, I[:len(p.coef)])) for p in polys]
    Q = np.array([[vals[0], vals[1]], [vals[1], vals[2]]])
    return T, Q


def is_near_critical(omega, alpha):
    return abs(alpha * alpha * float(omega) ** 2 - 4) < NEAR_CRITICAL


def step_mean_cov(omega, alpha, a, h):
    """Transition matrix ``exp(A h)`` and noise covariance ``Q_h`` of one mode."""
    if not omega > 0:
        raise ConfigurationError(f"omega must be positive, got {omega}")
    if h < 0:
        raise ConfigurationError(f"step must be nonnegative, got {h}")
    if h == 0:
        return np.eye(2), np.zeros((2, 2))
    w2 = float(omega) ** 2
    sig2 = alpha * float(a) ** 2
    if is_near_critical(omega, alpha):
        T, Q = _series_route(w2, alpha, sig2, h)
    else:
        T, Q = _eigen_route(w2, alpha, sig2, h)
    if sig2 == 0:
        Q = np.zeros((2, 2))
    return T, Q


def stationary_cov(omega, alpha, a):
    """Stationary covariance ``diag(a^2/(2 w^4), a^2/(2 w^2))``; needs alpha > 0."""
    if not alpha > 0:
        raise ConfigurationError("the undamped linear mode has no stationary law")
    if not omega > 0:
        raise ConfigurationError(f"omega must be positive, got {omega}")
    w2 = float(omega) ** 2
    return np.diag([a * a / (2 * w2 * w2), a * a / (2 * w2)])


def lyapunov_residual(omega, alpha, a, cov=None):
    """``A S + S A' + diag(0, alpha a^2)`` for ``S`` (default: stationary_cov)."""
    A = drift_matrix(omega, alpha)
    S = stationary_cov(omega, alpha, a) if cov is None else cov
    return A @ S + S @ A.T + np.diag([0.0, alpha * a * a])


def transient_laws(omega, alpha, a, h, n, initial: ModeGaussian | None = None):
    """Laws at ``t = k h`` for k = 0..n by exact semigroup recursion."""
    law = initial or ModeGaussian(np.zeros(2), np.zeros((2, 2)))
    T, Q = step_mean_cov(omega, alpha, a, h)
    out = [law]
    for _ in range(n):
        law = law.push(T, Q)
        out.append(law)
    return out


def law_at(omega, alpha, a, t, initial: ModeGaussian | None = None) -> ModeGaussian:
    """Law at time ``t`` in one shot."""
    law = initial or ModeGaussian(np.zeros(2), np.zeros((2, 2)))
    T, Q = step_mean_cov(omega, alpha, a, t)
    return law.push(T, Q)


def duhamel_quadrature(omega, alpha, a, h, epsabs=1e-15, epsrel=1e-13):
    """Brute-force ``(exp(A h), Q_h)`` by adaptive quadrature of the Duhamel
    integrand with dense matrix exponentials."""
    A = drift_matrix(omega, alpha)
    B = np.diag([0.0, alpha * a * a])

    def integrand(s):
        E = expm(A * s)
        return E @ B @ E.T

    Q, _ = quad_vec(integrand, 0.0, h, epsabs=epsabs, epsrel=epsrel, limit=2000)
    return expm(A * h), 0.5 * (Q + Q.T)


def mode_covariances(basis, noise, alpha, t=None):
    """Per-mode covariances, shape (N, 2, 2): stationary if ``t`` is None,
    otherwise at time ``t`` from the null initial condition."""
    noise.check(basis)
    out = np.empty((basis.N, 2, 2))
    for j, (w, a) in enumerate(zip(basis.omega, noise.a)):
        out[j] = stationary_cov(w, alpha, a) if t is None else step_mean_cov(w, alpha, a, t)[1]
    return out


def norm21_moment(basis, noise, alpha, t=None):
    """``E ||[z, dz/dt]||_{2,1}^2`` of the stochastic convolution at time ``t``
    (stationary when ``t`` is None, where it equals A0)."""
    cov = mode_covariances(basis, noise, alpha, t)
    w2 = basis.omega_sq
    return float(np.sum(w2 * w2 * cov[:, 0, 0] + w2 * cov[:, 1, 1]))


def norm21_sq(z, basis):
    """``||[z, dz/dt]||_{2,1}^2`` for a FieldState-like object or (u, v) pair."""
    w2 = basis.omega_sq
    return np.sum(w2 * w2 * z.u ** 2 + w2 * z.v ** 2, axis=-1)


def _as_norm_series(samples, basis):
    if hasattr(samples, "u"):
        return norm21_sq(samples, basis)
    return np.asarray(samples, dtype=float)


def kappa_of(basis):
    return min(basis.domain.spectral_gap, 1.0)


def moment_bound(p, basis, noise):
    """``A1^p p^p / kappa^p``."""
    return (noise.A1(basis) * p / kappa_of(basis)) ** p


def check_moment_bounds(samples, p_list, basis, noise, min_samples=30):
    """One-sided check of ``E ||z||_{2,1}^{2p} <= A1^p p^p / kappa^p``.

    ``samples`` holds stationary draws of the linear system, either as a
    FieldState batch of shape (chains, n, N) or as precomputed
    ``||z||_{2,1}^2`` values of shape (chains, n).
    """
    x = np.atleast_2d(_as_norm_series(samples, basis))
    if x.size < min_samples:
        raise ConfigurationError(f"{x.size} samples are too few for a moment estimate")
    report = {}
    for p in p_list:
        est = mean_with_se(x ** p)
        bound = moment_bound(p, basis, noise)
        report[int(p)] = {**est.to_dict(), "bound": bound,
                          "passed": bool(est.mean - 3 * est.se <= bound)}
    return report


def max_exponential_epsilon(basis, noise):
    """Largest epsilon for which the exponential control bound is claimed."""
    A1 = noise.A1(basis)
    return math.inf if A1 == 0 else kappa_of(basis) / (2 * A1 * math.e)


def check_exponential_control(trajectories, epsilon, basis, noise, times):
    """Estimate ``E exp((eps/t) int_0^t ||z(s)||_{2,1}^2 ds)`` from independent
    trajectories of the stochastic convolution started at zero.

    ``trajectories`` has shape (n_traj, len(times)) of norm values, or is a
    FieldState batch with shape (n_traj, len(times), N).  The time integral
    uses the trapezoid rule on ``times``.
    """
    eps_max = max_exponential_epsilon(basis, noise)
    if not 0 < epsilon <= eps_max * (1 + 1e-12):
        raise ConfigurationError(
            f"epsilon={epsilon} outside (0, kappa/(2 A1 e)] = (0, {eps_max}]")
    x = np.atleast_2d(_as_norm_series(trajectories, basis))
    times = np.asarray(times, dtype=float)
    t = times[-1] - times[0]
    if t <= 0:
        vals = np.ones(x.shape[0])
    else:
        vals = np.exp(epsilon * np.trapezoid(x, times, axis=-1) / t)
    est = mean_with_se(vals.ravel()[None, :], independent=True)
    return {**est.to_dict(), "epsilon": epsilon, "t": t, "bound": 3.0,
            "passed": bool(est.mean - 3 * est.se <= 3.0)}
