"""Damped-driven cubic Klein-Gordon on a Galerkin truncation.

Per mode ``du = v dt``, ``dv = (-w^2 u - alpha w^2 v - P_N(u^3)) dt +
sqrt(alpha) a dbeta``.  The linear part with its noise is an
Ornstein-Uhlenbeck process stepped exactly: ``z <- T_h z + xi`` with
``xi ~ N(0, Q_h)`` and ``Q_h = S - T_h S T_h'`` where ``S`` is the
stationary covariance.  The cubic kick is the only approximation.

Schemes: ``lie`` (exact OU step, then kick; first-order weak error) and
``strang`` (half OU step, kick, half OU step with fresh noise).
"""
from __future__ import annotations

import json
import math
import struct
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .deterministic import SCHEMES, LinearFlow, check_finite, n_steps
from .errors import ConfigurationError, ConfigurationWarning
from .functionals import FDLParams, FieldState, cubic_term, gamma0, sobolev_norm_sq
from .noise import NoiseSpec, RngStream
from .spectral import SpectralBasis

MIN_SAMPLES = 100
DEFAULT_BLOCK = 32


def _ou_noise_factor(flow: LinearFlow, omega_sq, alpha, a):
    """Lower Cholesky factor ``(l00, l10, l11)`` of ``Q_h`` for each mode."""
    if alpha == 0 or not np.any(a):
        z = np.zeros_like(omega_sq)
        return z, z, z
    s00 = a * a / (2 * omega_sq * omega_sq)
    s11 = a * a / (2 * omega_sq)
    t00, t01, t10, t11 = flow.T
    q00 = s00 - (t00 * t00 * s00 + t01 * t01 * s11)
    q01 = -(t00 * t10 * s00 + t01 * t11 * s11)
    q11 = s11 - (t10 * t10 * s00 + t11 * t11 * s11)
    l00 = np.sqrt(np.maximum(q00, 0.0))
    l10 = np.divide(q01, l00, out=np.zeros_like(q01), where=l00 > 0)
    l11 = np.sqrt(np.maximum(q11 - l10 * l10, 0.0))
    return l00, l10, l11


class SDEStepper:
    """Stepper for a fixed ``(alpha, noise, dt, scheme)`` on a basis.

    Works on batches: ``u`` and ``v`` have shape (..., N).  Standard normals
    can be injected (shape (..., 2, N) per linear substep) so that runs at
    different ``alpha`` or ``dt`` can share a noise path.
    """

    def __init__(self, basis: SpectralBasis, alpha, noise: NoiseSpec, dt,
                 scheme="lie", nonlinear=True):
        if scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
        if not dt > 0:
            raise ConfigurationError(f"dt must be positive, got {dt}")
        if alpha < 0:
            raise ConfigurationError(f"alpha must be nonnegative, got {alpha}")
        noise.check(basis)
        self.basis = basis
        self.alpha = float(alpha)
        self.noise = noise
        self.dt = float(dt)
        self.scheme = scheme
        self.nonlinear = nonlinear
        sub = dt / 2 if scheme == "strang" else dt
        self.flow = LinearFlow(basis.omega_sq, self.alpha, sub)
        self.chol = _ou_noise_factor(self.flow, basis.omega_sq, self.alpha, noise.a)
        self.silent = not any(np.any(c) for c in self.chol)

    @classmethod
    def from_frequencies(cls, omega, alpha, a, dt, scheme="lie"):
        """Linear-only stepper for arbitrary mode frequencies (no basis)."""
        omega_sq = np.atleast_1d(np.asarray(omega, dtype=float)) ** 2
        a = np.broadcast_to(np.asarray(a, dtype=float), omega_sq.shape).copy()
        if scheme not in SCHEMES:
            raise ConfigurationError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
        self = cls.__new__(cls)
        self.basis = None
        self.alpha = float(alpha)
        self.noise = NoiseSpec(a)
        self.dt = float(dt)
        self.scheme = scheme
        self.nonlinear = False
        sub = dt / 2 if scheme == "strang" else dt
        self.flow = LinearFlow(omega_sq, self.alpha, sub)
        self.chol = _ou_noise_factor(self.flow, omega_sq, self.alpha, a)
        self.silent = not any(np.any(c) for c in self.chol)
        return self

    @property
    def substeps(self):
        """Number of noisy linear substeps per step."""
        return 2 if self.scheme == "strang" else 1

    def increments(self, zeta):
        """Map standard normals (..., 2, N) to OU increments ``(xi_u, xi_v)``."""
        l00, l10, l11 = self.chol
        z0, z1 = zeta[..., 0, :], zeta[..., 1, :]
        return l00 * z0, l10 * z0 + l11 * z1

    def _ou(self, u, v, xi):
        u, v = self.flow(u, v)
        if xi is None:
            return u, v
        return u + xi[0], v + xi[1]

    def _kick(self, u, v):
        if not self.nonlinear:
            return v
        return v - self.dt * cubic_term(u, self.basis)

    def step_increments(self, u, v, xi1, xi2=None):
        """One step given OU increments (``xi2`` is for the second Strang half)."""
        u, v = self._ou(u, v, xi1)
        v = self._kick(u, v)
        if self.scheme == "strang":
            u, v = self._ou(u, v, xi2)
        return u, v

    def step_arrays(self, u, v, zeta=None, gen=None):
        """One step; ``zeta`` has shape (substeps, ..., 2, N) or is drawn from ``gen``."""
        if self.silent:
            return self.step_increments(u, v, None, None)
        if zeta is None:
            zeta = gen.standard_normal((self.substeps,) + u.shape[:-1] + (2, u.shape[-1]))
        xi1 = self.increments(zeta[0])
        xi2 = self.increments(zeta[1]) if self.scheme == "strang" else None
        return self.step_increments(u, v, xi1, xi2)

    def step(self, y: FieldState, gen) -> FieldState:
        return FieldState(*self.step_arrays(y.u, y.v, gen=gen))

    def drift(self, y: FieldState) -> FieldState:
        """Deterministic vector field of the damped equation."""
        w2 = self.basis.omega_sq
        f = -w2 * y.u - self.alpha * w2 * y.v
        if self.nonlinear:
            f = f - cubic_term(y.u, self.basis)
        return FieldState(y.v, f)


def linear_marginals(stepper: SDEStepper, n, mean0=None, cov0=None):
    """Per-mode mean (M, 2) and covariance (M, 2, 2) after ``n`` steps of a
    linear-only stepper, read off by probing its affine map ``y -> T y + L zeta``."""
    if stepper.nonlinear:
        raise ValueError("marginals are Gaussian only with the cubic term disabled")
    M = len(stepper.flow.T[0])
    k = stepper.substeps
    # unit probes in u, then in v, with the noise switched off
    Tu = stepper.step_arrays(np.eye(M), np.zeros((M, M)), zeta=np.zeros((k, M, 2, M)))
    Tv = stepper.step_arrays(np.zeros((M, M)), np.eye(M), zeta=np.zeros((k, M, 2, M)))
    T = np.empty((M, 2, 2))
    T[:, 0, 0], T[:, 1, 0] = np.diag(Tu[0]), np.diag(Tu[1])
    T[:, 0, 1], T[:, 1, 1] = np.diag(Tv[0]), np.diag(Tv[1])
    # covariance added per step: propagate each unit normal from the zero state
    Q = np.zeros((M, 2, 2))
    for i in range(k):
        for c in range(2):
            zeta = np.zeros((k, M, 2, M))
            zeta[i, np.arange(M), c, np.arange(M)] = 1.0
            du, dv = stepper.step_arrays(np.zeros((M, M)), np.zeros((M, M)), zeta=zeta)
            col = np.stack([np.diag(du), np.diag(dv)], axis=-1)
            Q += col[:, :, None] * col[:, None, :]
    mean = np.zeros((M, 2)) if mean0 is None else np.array(mean0, dtype=float)
    cov = np.zeros((M, 2, 2)) if cov0 is None else np.array(cov0, dtype=float)
    for _ in range(n):
        mean = np.einsum("mij,mj->mi", T, mean)
        cov = T @ cov @ np.swapaxes(T, 1, 2) + Q
    return mean, cov


def _generator(rng):
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return RngStream(int(rng)).generator()


def sde_step(y: FieldState, h, params, noise: NoiseSpec, basis: SpectralBasis, rng,
             scheme="lie", nonlinear=True) -> FieldState:
    """Single step of the damped-driven flow (convenience wrapper)."""
    alpha = params.alpha if isinstance(params, FDLParams) else float(params)
    stepper = SDEStepper(basis, alpha, noise, h, scheme, nonlinear)
    out = stepper.step(y, _generator(rng))
    check_finite(out.u, out.v, h)
    return out


@dataclass
class RunSpec:
    """Stationary run layout in model time.  ``burn_in`` and ``thin``
    default to ``max(0.2 T, 10/(gamma0 alpha))`` and ``1/(gamma0 alpha)``."""
    T: float
    dt: float
    burn_in: float | None = None
    thin: float | None = None
    chains: int = 1
    scheme: str = "lie"
    block: int = DEFAULT_BLOCK

    def resolved(self, alpha, basis):
        rate = gamma0(basis.domain) * alpha
        burn = self.burn_in if self.burn_in is not None else max(0.2 * self.T, 10 / rate)
        thin = self.thin if self.thin is not None else 1 / rate
        if not 0 <= burn < self.T:
            raise ConfigurationError(f"burn-in {burn} must lie in [0, T={self.T})")
        if not thin > 0:
            raise ConfigurationError(f"thinning interval must be positive, got {thin}")
        if self.chains < 1 or self.block < 1:
            raise ConfigurationError("chains and block size must be positive")
        return burn, thin


@dataclass
class StationaryRun:
    """Thinned post-burn-in samples; ``u`` and ``v`` have shape (chains, n, N)."""
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    alpha: float
    meta: dict = field(default_factory=dict)

    @property
    def states(self) -> FieldState:
        return FieldState(self.u, self.v)

    @property
    def n_samples(self):
        return self.u.shape[0] * self.u.shape[1]


def _run_block(stepper, n_chains, n_total, burn_steps, thin_steps, gen, N):
    u = np.zeros((n_chains, N))
    v = np.zeros((n_chains, N))
    us, vs = [], []
    for k in range(1, n_total + 1):
        u, v = stepper.step_arrays(u, v, gen=gen)
        check_finite(u, v, k * stepper.dt)
        if k > burn_steps and (k - burn_steps) % thin_steps == 0:
            us.append(u)
            vs.append(v)
    if not us:
        return np.zeros((n_chains, 0, N)), np.zeros((n_chains, 0, N))
    return np.stack(us, axis=1), np.stack(vs, axis=1)


def simulate_stationary(params, noise: NoiseSpec, basis: SpectralBasis, run: RunSpec,
                        rng, nonlinear=True, threads=1) -> StationaryRun:
    """Krylov-Bogoliubov sampling of the stationary law from ``y0 = 0``.

    Chains are split into blocks of ``run.block``; block ``b`` draws from
    ``RngStream(seed, b)``, so results do not depend on ``threads``.
    """
    alpha = params.alpha if isinstance(params, FDLParams) else float(params)
    if not 0 < alpha <= 1:
        raise ConfigurationError(f"alpha must lie in (0, 1], got {alpha}")
    burn, thin = run.resolved(alpha, basis)
    stepper = SDEStepper(basis, alpha, noise, run.dt, run.scheme, nonlinear)
    burn_steps = int(round(burn / run.dt))
    thin_steps = max(1, int(round(thin / run.dt)))
    n_total = n_steps(run.T, run.dt)
    per_chain = max(0, (n_total - burn_steps) // thin_steps)
    if per_chain * run.chains < MIN_SAMPLES:
        warnings.warn(f"only {per_chain * run.chains} stationary samples after thinning",
                      ConfigurationWarning, stacklevel=2)
    seed = rng.master_seed if isinstance(rng, RngStream) else int(rng)
    sizes = [min(run.block, run.chains - s) for s in range(0, run.chains, run.block)]

    def job(b):
        gen = RngStream(seed, b).generator()
        return _run_block(stepper, sizes[b], n_total, burn_steps, thin_steps, gen, basis.N)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(b) for b in range(len(sizes))]
    u = np.concatenate([p[0] for p in parts], axis=0)
    v = np.concatenate([p[1] for p in parts], axis=0)
    times = (burn_steps + thin_steps * np.arange(1, per_chain + 1)) * run.dt
    meta = {"alpha": alpha, "T": run.T, "dt": run.dt, "burn_in": burn_steps * run.dt,
            "thin": thin_steps * run.dt, "chains": run.chains, "scheme": run.scheme,
            "block": run.block, "seed": seed, "nonlinear": nonlinear,
            "samples_per_chain": per_chain}
    return StationaryRun(times, u, v, alpha, meta)


@dataclass
class CouplingRecord:
    """Per-initial-condition results of :func:`coupled_pair_evolve` (batched)."""
    sup_discrepancy: np.ndarray   # sup_t ||phi^alpha_t w - phi_t w||_{1,0}^2
    sup_z_h2: np.ndarray          # sup_t ||z_alpha(t)||_2 (position part)
    final_discrepancy: np.ndarray
    alpha: float
    T: float
    dt: float

    def event(self, r):
        """Indicator of ``sup_t ||z||_2 <= sqrt(alpha) r``."""
        return self.sup_z_h2 <= math.sqrt(self.alpha) * r

    def restricted(self, r):
        return self.sup_discrepancy * self.event(r)


def coupled_pair_evolve(w: FieldState, alpha, T, dt, noise: NoiseSpec, basis: SpectralBasis,
                        rng, scheme="lie") -> CouplingRecord:
    """Evolve ``w`` under the damped-driven flow and the Hamiltonian flow.

    The stochastic convolution ``z`` (linear, from zero) is advanced with the
    same OU increments as the damped-driven state.  Standard normals come
    from ``rng`` and do not depend on ``alpha``, so calls with different
    ``alpha`` and the same stream are coupled.
    """
    n = n_steps(T, dt)
    if n:
        dt = T / n
    gen = _generator(rng)
    damped = SDEStepper(basis, alpha, noise, dt, scheme)
    free = SDEStepper(basis, 0.0, NoiseSpec.zero(basis), dt, scheme)
    ua, va = w.u.copy(), w.v.copy()
    uh, vh = w.u.copy(), w.v.copy()
    zu, zv = np.zeros_like(w.u), np.zeros_like(w.v)
    batch = w.u.shape[:-1]
    sup_d = np.zeros(batch)
    sup_z = np.zeros(batch)
    d = sup_d
    for k in range(1, n + 1):
        zeta = gen.standard_normal((damped.substeps,) + batch + (2, basis.N))
        xi = [damped.increments(zeta[i]) for i in range(damped.substeps)]
        ua, va = damped.step_increments(ua, va, *xi)
        uh, vh = free.step_increments(uh, vh, None, None)
        for x in xi:
            zu, zv = damped.flow(zu, zv)
            zu, zv = zu + x[0], zv + x[1]
        check_finite(ua, va, k * dt)
        check_finite(uh, vh, k * dt)
        d = sobolev_norm_sq(ua - uh, 1, basis) + sobolev_norm_sq(va - vh, 0, basis)
        sup_d = np.maximum(sup_d, d)
        sup_z = np.maximum(sup_z, np.sqrt(sobolev_norm_sq(zu, 2, basis)))
    return CouplingRecord(sup_d, sup_z, d, float(alpha), float(T), float(dt))


MAGIC = b"FDLKG1"


def write_checkpoint(path, basis: SpectralBasis, noise: NoiseSpec, times, u, v, extra=None):
    """Binary sample stream: magic, uint32 header length, JSON header, then
    little-endian float64 records ``(t, u[0..N), v[0..N))``.

    ``u`` and ``v`` have shape (n, N) with one record per entry of ``times``.
    """
    u = np.asarray(u, dtype=float).reshape(-1, basis.N)
    v = np.asarray(v, dtype=float).reshape(-1, basis.N)
    times = np.asarray(times, dtype=float).ravel()
    if not len(times) == len(u) == len(v):
        raise ValueError("times, u and v must have the same number of records")
    header = {"basis": basis.describe(), "N": basis.N, "noise": noise.describe(),
              "records": len(times), **(extra or {})}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    rec = np.column_stack([times, u, v]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(rec.tobytes())


def read_checkpoint(path):
    """Inverse of :func:`write_checkpoint`: ``(header, times, u, v)``."""
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a sample checkpoint")
        (n,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(n).decode("utf-8"))
        data = np.frombuffer(fh.read(), dtype="<f8")
    N = header["N"]
    rec = data.reshape(-1, 2 * N + 1)
    return header, rec[:, 0].copy(), rec[:, 1:N + 1].copy(), rec[:, N + 1:].copy()
