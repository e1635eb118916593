"""Phase-space states and the functionals defined on them.

All functionals take a :class:`FieldState` whose ``u`` and ``v`` arrays may
carry leading batch axes; results are returned with the batch shape.  In
coefficient space ``-Delta_0 = -Delta + m0^2`` is diagonal with entries
``omega_j^2``, so e.g. ``-int v Delta_0 u = sum_j omega_j^2 u_j v_j``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import DomainSpec, SpectralBasis, power_integral, sobolev_norm_sq, to_physical, to_spectral


@dataclass(frozen=True)
class FieldState:
    """Position/velocity coefficient pair ``y = [u, du/dt]``."""
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != v.shape:
            raise ValueError(f"u and v shapes differ: {u.shape} vs {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, N, batch=()):
        shape = (batch,) if isinstance(batch, int) else tuple(batch)
        return cls(np.zeros(shape + (N,)), np.zeros(shape + (N,)))

    @property
    def N(self):
        return self.u.shape[-1]

    @property
    def batch_shape(self):
        return self.u.shape[:-1]

    def is_finite(self):
        return bool(np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v)))

    def __getitem__(self, idx):
        return FieldState(self.u[idx], self.v[idx])

    def __add__(self, other):
        return FieldState(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return FieldState(self.u - other.u, self.v - other.v)

    def scaled(self, s):
        return FieldState(s * self.u, s * self.v)


def norm_sq(y: FieldState, m, n, basis):
    """``||[u, v]||_{m,n}^2 = ||u||_m^2 + ||v||_n^2``."""
    return sobolev_norm_sq(y.u, m, basis) + sobolev_norm_sq(y.v, n, basis)


def norm(y: FieldState, m, n, basis):
    return np.sqrt(norm_sq(y, m, n, basis))


@dataclass(frozen=True)
class FDLParams:
    alpha: float
    epsilon_l2: float = 0.1

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not 0 < self.epsilon_l2 < 1:
            raise ValueError(f"epsilon_l2 must lie in (0, 1), got {self.epsilon_l2}")


def kappa(domain: DomainSpec) -> float:
    return min(domain.spectral_gap, 1.0)


def gamma0(domain: DomainSpec) -> float:
    """Decay rate (per unit alpha) of G1 along the unforced damped flow."""
    k = kappa(domain)
    return 2 * k * k / (2 + domain.spectral_gap)


def quartic(u, basis):
    return power_integral(u, 4, basis)


def cubic_term(u, basis: SpectralBasis):
    """Galerkin projection of ``u^3``, alias-free on the padded grid."""
    phys = to_physical(u, basis).values
    return to_spectral(phys ** 3, basis)


def energy(y: FieldState, basis):
    """Hamiltonian ``E = 1/2 ||y||_{1,0}^2 + 1/4 int u^4``."""
    return 0.5 * norm_sq(y, 1, 0, basis) + 0.25 * quartic(y.u, basis)


def _alpha(params):
    return params.alpha if isinstance(params, FDLParams) else float(params)


def g1(y: FieldState, params, basis):
    a = _alpha(params)
    c0 = basis.domain.spectral_gap
    return (energy(y, basis)
            + 0.5 * a * c0 * np.sum(y.u * y.v, axis=-1)
            + 0.25 * a * a * c0 * sobolev_norm_sq(y.u, 1, basis))


def g2(y: FieldState, params, basis):
    a = _alpha(params)
    return (energy(y, basis)
            + 0.5 * a * np.sum(basis.omega_sq * y.u * y.v, axis=-1)
            + 0.25 * a * a * sobolev_norm_sq(y.u, 2, basis))


def l1(y: FieldState, basis):
    """Dissipation rate of G1: ``dG1/dt = -alpha L1`` for the unforced flow."""
    c0 = basis.domain.spectral_gap
    return 0.5 * (c0 * sobolev_norm_sq(y.u, 1, basis)
                  + 2 * sobolev_norm_sq(y.v, 1, basis)
                  - c0 * sobolev_norm_sq(y.v, 0, basis)
                  + c0 * quartic(y.u, basis))


def l2(y: FieldState, params, basis):
    eps = params.epsilon_l2 if isinstance(params, FDLParams) else 0.1
    return 0.5 * ((1 - eps) * sobolev_norm_sq(y.u, 2, basis)
                  + sobolev_norm_sq(y.v, 1, basis))


def n1(y: FieldState, params, basis):
    """Quadratic G1 analogue; nonincreasing along the linear damped flow."""
    a = _alpha(params)
    c0 = basis.domain.spectral_gap
    return (0.5 * norm_sq(y, 1, 0, basis)
            + 0.5 * a * c0 * np.sum(y.u * y.v, axis=-1)
            + 0.25 * a * a * c0 * sobolev_norm_sq(y.u, 1, basis))


def n2(y: FieldState, params, basis):
    a = _alpha(params)
    c0 = basis.domain.spectral_gap
    return (0.5 * norm_sq(y, 2, 1, basis)
            + 0.5 * a * c0 * np.sum(basis.omega_sq * y.u * y.v, axis=-1)
            + 0.25 * a * a * c0 * sobolev_norm_sq(y.u, 2, basis))


def n_dissipation(y: FieldState, m, basis):
    """Integrand of the exact linear dissipation identity for N_m (m = 1, 2)."""
    c0 = basis.domain.spectral_gap
    return 0.5 * (c0 * sobolev_norm_sq(y.u, m, basis)
                  + 2 * sobolev_norm_sq(y.v, m, basis)
                  - c0 * sobolev_norm_sq(y.v, m - 1, basis))


def l6_sixth(y: FieldState, basis):
    """``||u||_{L^6}^6``; exact when the basis padding factor is at least 3."""
    return power_integral(y.u, 6, basis)


def momentum(y: FieldState, basis):
    """Torus momentum ``int u_t grad u`` (diagnostic only; not coercive)."""
    if basis.domain.kind != "torus":
        raise ValueError("momentum is only defined on the torus")
    out = []
    for axis in range(basis.domain.dimension):
        du = np.zeros_like(y.u)
        # d/dx_i maps (cos k.x, sin k.x) -> (-k_i sin, k_i cos)
        for j, (kind, k) in enumerate(basis.labels):
            if kind == "cos":
                js = basis.mode_index_map.get(("sin", k))
                if js is not None:
                    du[..., js] -= k[axis] * y.u[..., j]
            elif kind == "sin":
                jc = basis.mode_index_map[("cos", k)]
                du[..., jc] += k[axis] * y.u[..., j]
        out.append(np.sum(y.v * du, axis=-1))
    return np.stack(out, axis=-1)
