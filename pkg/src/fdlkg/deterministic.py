"""Hamiltonian and damped Klein-Gordon flows on a Galerkin truncation.

The linear part ``u'' = -omega^2 u - alpha omega^2 u'`` is integrated
exactly mode by mode; only the cubic kick ``v <- v - h P_N(u^3)`` is
approximate.  ``strang`` (half linear, kick, half linear) is second order
and, for ``alpha = 0``, symplectic and time-reversible; ``lie`` (linear,
then kick) is first order.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IntegrationBlowup
from .functionals import FieldState, cubic_term
from .spectral import SpectralBasis

BLOWUP_THRESHOLD = 1e12
SCHEMES = ("strang", "lie")


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: str = "strang"
    alpha: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.alpha < 0:
            raise ConfigurationError(f"alpha must be nonnegative, got {self.alpha}")

    def resolution(self, basis):
        """``dt * max omega``; values near pi under-resolve the fastest mode."""
        return float(self.dt * basis.omega.max())


def propagator(omega_sq, alpha, h):
    """Entries ``(T00, T01, T10, T11)`` of ``exp(h [[0, 1], [-w^2, -alpha w^2]])``.

    Written as ``exp(-b h) [C I + S (A + b I)]`` with ``b = alpha w^2 / 2``;
    ``C`` and ``S`` are evaluated in forms that stay accurate through the
    critically damped case and for strongly overdamped modes.
    """
    w2 = np.asarray(omega_sq, dtype=float)
    b = 0.5 * alpha * w2
    q = w2 - b * b
    h = float(h)
    under = q > 0
    over = q < 0
    nu = np.sqrt(np.where(under, q, 1.0))
    mu = np.sqrt(np.where(over, -q, 1.0))
    decay = np.exp(-b * h)
    eC = np.where(under, decay * np.cos(nu * h), decay)
    eS = np.where(under, decay * h * np.sinc(nu * h / np.pi), decay * h)
    if np.any(over):
        slow = w2 / (b + mu)  # = b - mu without cancellation
        e_slow = np.exp(-slow * h)
        e_fast = np.exp(-(b + mu) * h)
        eC = np.where(over, 0.5 * (e_slow + e_fast), eC)
        eS = np.where(over, e_slow * (-np.expm1(-2 * mu * h)) / (2 * mu), eS)
    return eC + b * eS, eS, -w2 * eS, eC - b * eS


class LinearFlow:
    """Exact per-mode linear propagator over a fixed step ``h``."""

    def __init__(self, omega_sq, alpha, h):
        self.h = h
        self.alpha = alpha
        self.T = tuple(np.asarray(t) for t in propagator(omega_sq, alpha, h))

    def __call__(self, u, v):
        t00, t01, t10, t11 = self.T
        return t00 * u + t01 * v, t10 * u + t11 * v

    def matrices(self):
        t00, t01, t10, t11 = self.T
        return np.stack([np.stack([t00, t01], -1), np.stack([t10, t11], -1)], -2)


def linear_step_exact(y: FieldState, h, alpha, basis: SpectralBasis) -> FieldState:
    u, v = LinearFlow(basis.omega_sq, alpha, h)(y.u, y.v)
    return FieldState(u, v)


class DeterministicStepper:
    """Split-step integrator for the (optionally damped) cubic KG flow.

    ``nonlinear=False`` drops the kick, giving the exact linear flow.
    """

    def __init__(self, config: StepperConfig, basis: SpectralBasis, nonlinear=True):
        self.config = config
        self.basis = basis
        self.nonlinear = nonlinear
        h = config.dt
        if config.scheme == "strang":
            self._half = LinearFlow(basis.omega_sq, config.alpha, h / 2)
            self._half_back = LinearFlow(basis.omega_sq, config.alpha, -h / 2) if config.alpha == 0 else None
        else:
            self._full = LinearFlow(basis.omega_sq, config.alpha, h)

    def _kick(self, u, v, h):
        if not self.nonlinear:
            return v
        return v - h * cubic_term(u, self.basis)

    def step_arrays(self, u, v):
        h = self.config.dt
        if self.config.scheme == "strang":
            u, v = self._half(u, v)
            v = self._kick(u, v, h)
            return self._half(u, v)
        u, v = self._full(u, v)
        return u, self._kick(u, v, h)

    def step(self, y: FieldState) -> FieldState:
        return FieldState(*self.step_arrays(y.u, y.v))

    def step_back(self, y: FieldState) -> FieldState:
        """Inverse Strang step of the Hamiltonian flow (``alpha = 0`` only)."""
        if self.config.scheme != "strang" or self.config.alpha != 0:
            raise ValueError("backward stepping needs the undamped Strang scheme")
        u, v = self._half_back(y.u, y.v)
        v = self._kick(u, v, -self.config.dt)
        return FieldState(*self._half_back(u, v))


def strang_step(y: FieldState, config: StepperConfig, basis: SpectralBasis) -> FieldState:
    if config.scheme != "strang":
        config = StepperConfig(config.dt, "strang", config.alpha)
    return DeterministicStepper(config, basis).step(y)


def check_finite(u, v, t):
    m = max(np.max(np.abs(u), initial=0.0), np.max(np.abs(v), initial=0.0))
    if not np.isfinite(m) or m > BLOWUP_THRESHOLD:
        raise IntegrationBlowup(t, m)


@dataclass
class Trajectory:
    """Observable time series sampled along a trajectory."""
    times: np.ndarray
    values: dict = field(default_factory=dict)

    def write_csv(self, path):
        """Rows ``(time, observable, value)``; batched values get ``name[i]``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "observable", "value"])
            for k, t in enumerate(self.times):
                for name, series in self.values.items():
                    val = np.asarray(series[k])
                    if val.ndim == 0:
                        w.writerow([repr(float(t)), name, repr(float(val))])
                    else:
                        for i, x in enumerate(val.ravel()):
                            w.writerow([repr(float(t)), f"{name}[{i}]", repr(float(x))])


def n_steps(T, dt):
    if T < 0:
        raise ConfigurationError(f"integration time must be nonnegative, got {T}")
    if T == 0:
        return 0
    return max(1, int(np.ceil(T / dt - 1e-9)))


def evolve(y0: FieldState, T, config: StepperConfig, basis: SpectralBasis,
           observers=None, every=1, nonlinear=True):
    """Integrate for time ``T`` with step ``config.dt`` (shrunk so it divides T).

    ``observers`` maps names to functions of a :class:`FieldState`; they are
    sampled at t = 0 and every ``every`` steps.  Returns the final state and
    a :class:`Trajectory`.
    """
    observers = observers or {}
    n = n_steps(T, config.dt)
    if n and not np.isclose(n * config.dt, T, rtol=1e-12, atol=0):
        config = StepperConfig(T / n, config.scheme, config.alpha)
    stepper = DeterministicStepper(config, basis, nonlinear=nonlinear)
    u, v = y0.u.copy(), y0.v.copy()
    times, values = [], {name: [] for name in observers}

    def sample(k):
        y = FieldState(u, v)
        times.append(k * config.dt)
        for name, f in observers.items():
            values[name].append(f(y))

    sample(0)
    for k in range(1, n + 1):
        u, v = stepper.step_arrays(u, v)
        check_finite(u, v, k * config.dt)
        if k % every == 0:
            sample(k)
    traj = Trajectory(np.asarray(times), {k: np.asarray(x) for k, x in values.items()})
    return FieldState(u, v), traj
