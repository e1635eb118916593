"""Time averages, correlations and recurrence along the Hamiltonian flow.

Initial states are snapshots of a stationary run; the flow is the undamped
Strang integrator.  Because that integrator conserves energy only up to
O(dt^2), every report carries the observed energy drift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .deterministic import DeterministicStepper, StepperConfig, check_finite, n_steps
from .errors import ConfigurationError
from .functionals import FieldState, energy, norm, norm_sq

FULL = "full"
EMPTY = "empty"
BALL = "ball"
ENERGY_BAND = "energy_band"


@dataclass(frozen=True, eq=False)
class PhaseSet:
    """Deterministic membership predicate on phase space."""
    kind: str
    center: FieldState | None = None
    radius: float = 0.0
    m: float = 1.0
    n: float = 0.0
    lo: float = 0.0
    hi: float = math.inf

    @classmethod
    def ball(cls, center: FieldState, radius, m=1.0, n=0.0):
        if radius < 0:
            raise ConfigurationError("ball radius must be nonnegative")
        return cls(BALL, center=center, radius=float(radius), m=m, n=n)

    @classmethod
    def energy_band(cls, lo, hi):
        if not lo <= hi:
            raise ConfigurationError("energy band needs lo <= hi")
        return cls(ENERGY_BAND, lo=float(lo), hi=float(hi))

    @classmethod
    def full(cls):
        return cls(FULL)

    @classmethod
    def empty(cls):
        return cls(EMPTY)

    def contains(self, y: FieldState, basis):
        shape = y.u.shape[:-1]
        if self.kind == FULL:
            return np.ones(shape, dtype=bool)
        if self.kind == EMPTY:
            return np.zeros(shape, dtype=bool)
        if self.kind == BALL:
            return norm(y - self.center, self.m, self.n, basis) < self.radius
        if self.kind == ENERGY_BAND:
            E = energy(y, basis)
            return (E >= self.lo) & (E < self.hi)
        raise ConfigurationError(f"unknown phase set kind {self.kind!r}")


def _flat(samples) -> FieldState:
    y = samples.states if hasattr(samples, "states") else samples
    return FieldState(y.u.reshape(-1, y.N), y.v.reshape(-1, y.N))


def _hamiltonian(dt, basis):
    return DeterministicStepper(StepperConfig(dt, "strang", 0.0), basis)


def _flow_observe(y0: FieldState, T, dt, basis, observe, every=1):
    """Advance ``y0`` (batched) to time ``T``; call ``observe(k, t, y)`` at
    step 0 and every ``every`` steps.  Returns the final state, the step and
    the maximal relative energy drift."""
    n = n_steps(T, dt)
    if n:
        dt = T / n
    stepper = _hamiltonian(dt, basis)
    u, v = y0.u.copy(), y0.v.copy()
    E0 = energy(y0, basis)
    drift = np.zeros_like(E0)
    observe(0, 0.0, FieldState(u, v))
    for k in range(1, n + 1):
        u, v = stepper.step_arrays(u, v)
        check_finite(u, v, k * dt)
        if k % every == 0 or k == n:
            y = FieldState(u, v)
            drift = np.maximum(drift, np.abs(energy(y, basis) - E0) / np.maximum(np.abs(E0), 1e-300))
            observe(k, k * dt, y)
    return FieldState(u, v), dt, float(np.max(drift, initial=0.0))


def birkhoff_average(f, y0: FieldState, T, dt, basis, checkpoints=8, every=1):
    """``(1/T) int_0^T f(phi_t y0) dt`` by the trapezoid rule, with partial
    averages at ``checkpoints`` equally spaced times."""
    times, values = [], []

    def observe(k, t, y):
        times.append(t)
        values.append(np.asarray(f(y), dtype=float))

    _, dt, drift = _flow_observe(y0, T, dt, basis, observe, every)
    times = np.asarray(times)
    values = np.asarray(values)
    if len(times) < 2:
        return {"average": values[0], "times": times, "partial": values, "energy_drift": drift,
                "checkpoint_times": times}
    cum = np.concatenate([np.zeros((1,) + values.shape[1:]),
                          np.cumsum(0.5 * np.diff(times)[(...,) + (None,) * (values.ndim - 1)]
                                    * (values[1:] + values[:-1]), axis=0)])
    idx = np.unique(np.linspace(0, len(times) - 1, checkpoints + 1).round().astype(int)[1:])
    partial = cum[idx] / times[idx][(...,) + (None,) * (values.ndim - 1)]
    increments = np.abs(np.diff(partial, axis=0))
    return {"average": partial[-1], "checkpoint_times": times[idx], "partial": partial,
            "cauchy_increments": increments, "energy_drift": drift}


def _bootstrap_se(values, rng, draws=200):
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n < 2:
        return 0.0
    idx = rng.integers(0, n, size=(draws, n))
    return float(np.std(values[idx].mean(axis=1), ddof=1))


def correlation_average(A: PhaseSet, B: PhaseSet, mu_samples, t, dt, basis,
                        every=1, seed=0):
    """``(1/t) int_0^t mu(A ∩ phi_s^-1 B) ds`` over empirical samples.

    Only samples in ``A`` are evolved (the rest contribute zero).  The
    standard error comes from a bootstrap over samples.
    """
    y = _flat(mu_samples)
    n = y.u.shape[0]
    inA = A.contains(y, basis)
    muA = float(inA.mean())
    per_sample = np.zeros(n)
    drift = 0.0
    if inA.any() and t > 0:
        ya = y[inA]
        times, hits = [], []

        def observe(k, s, z):
            times.append(s)
            hits.append(B.contains(z, basis).astype(float))

        _, _, drift = _flow_observe(ya, t, dt, basis, observe, every)
        per_sample[inA] = np.trapezoid(np.asarray(hits), np.asarray(times), axis=0) / t
    elif inA.any():
        per_sample[inA] = B.contains(y[inA], basis)
    rng = np.random.default_rng(seed)
    # joint bootstrap of the gap to the recurrence lower bound mu(A)^2
    idx = rng.integers(0, n, size=(200, n))
    gaps = per_sample[idx].mean(axis=1) - inA[idx].mean(axis=1) ** 2
    gap = float(per_sample.mean() - muA * muA)
    gap_se = float(np.std(gaps, ddof=1)) if n > 1 else 0.0
    return {"estimate": float(per_sample.mean()), "se": _bootstrap_se(per_sample, rng),
            "mu_A": muA, "mu_A_se": _bootstrap_se(inA.astype(float), rng),
            "lower_bound": muA * muA, "gap": gap, "gap_se": gap_se,
            "above_lower_bound": bool(gap >= -3 * gap_se),
            "samples": n, "energy_drift": drift}


def recurrence_check(A: PhaseSet, mu_samples, horizon, dt, basis, grid=16):
    """Late-time recurrence ``max_t mu(A ∩ phi_t^-1 A) >= mu(A)^2``.

    ``t`` runs over a geometric grid on ``[horizon/4, horizon]``; the
    standard error is binomial at the maximizing time.
    """
    y = _flat(mu_samples)
    n = y.u.shape[0]
    inA = A.contains(y, basis)
    muA = float(inA.mean())
    target = muA * muA
    if muA == 0:
        return {"status": "inconclusive", "passed": False, "mu_A": 0.0, "target": 0.0}
    steps = n_steps(horizon, dt)
    dt_eff = horizon / steps
    grid_t = np.geomspace(horizon / 4, horizon, grid)
    grid_k = np.unique(np.clip(np.round(grid_t / dt_eff).astype(int), 1, steps))
    est = {}

    def observe(k, s, z):
        if k in grid_set:
            est[k] = float(A.contains(z, basis).sum() / n)

    grid_set = set(grid_k.tolist())
    _, _, drift = _flow_observe(y[inA], horizon, dt, basis, observe)
    ks = sorted(est)
    vals = np.array([est[k] for k in ks])
    best = int(np.argmax(vals))
    p = vals[best]
    se = math.sqrt(max(p * (1 - p), 1.0 / n) / n)
    passed = bool(p >= target - 3 * se)
    return {"times": np.array(ks) * dt_eff, "estimates": vals, "max": float(p), "se": se,
            "mu_A": muA, "target": target, "passed": passed,
            "status": "pass" if passed else "fail", "energy_drift": drift}


def return_times(y: FieldState, delta, m, n, horizon, dt, basis, nonlinear=True):
    """Times of near-returns ``||phi_t y - y||_{m,n} < delta``.

    Each visit to the delta-ball (after having left it) contributes the time
    of closest approach within the visit.
    """
    steps = n_steps(horizon, dt)
    if steps:
        dt = horizon / steps
    stepper = DeterministicStepper(StepperConfig(dt, "strang", 0.0), basis, nonlinear=nonlinear)
    u, v = y.u.copy(), y.v.copy()
    out = []
    outside = False
    best = None
    for k in range(1, steps + 1):
        u, v = stepper.step_arrays(u, v)
        check_finite(u, v, k * dt)
        d = float(norm(FieldState(u - y.u, v - y.v), m, n, basis))
        if d < delta:
            if outside:
                if best is None or d < best[1]:
                    best = (k * dt, d)
        else:
            if best is not None:
                out.append(best[0])
                best = None
            outside = True
    if best is not None:
        out.append(best[0])
    return np.asarray(out)


def max_energy_drift(y0: FieldState, T, dt, basis):
    """``max_t |E(t) - E(0)| / |E(0)|`` along the Strang Hamiltonian flow."""
    return _flow_observe(y0, T, dt, basis, lambda *a: None)[2]


def energy_drift_check(y0: FieldState, T, dt, basis, tol=1e-6, max_halvings=12):
    """Halve ``dt`` until the relative drift over ``[0, T]`` is at most
    ``tol``, then report the drift ratio between that ``dt`` and ``dt/2``
    (about 4 for a second-order scheme)."""
    history = []
    drift = max_energy_drift(y0, T, dt, basis)
    history.append((dt, drift))
    halvings = 0
    while drift > tol and halvings < max_halvings:
        dt /= 2
        halvings += 1
        drift = max_energy_drift(y0, T, dt, basis)
        history.append((dt, drift))
    half = max_energy_drift(y0, T, dt / 2, basis)
    ratio = drift / half if half > 0 else math.inf
    return {"dt": dt, "drift": drift, "drift_half": half, "ratio": ratio,
            "history": history, "within_tol": bool(drift <= tol),
            "passed": bool(drift <= tol and 3.5 <= ratio <= 4.5)}
