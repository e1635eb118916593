"""Laplacian eigenbases, Sobolev norms and collocation transforms.

Two domains are supported:

* the d-torus ``[0, 2*pi)^d`` (d = 1, 2, 3) with the real orthonormal
  trigonometric family ``1/sqrt(V)``, ``sqrt(2/V) cos(k.x)``,
  ``sqrt(2/V) sin(k.x)``;
* the interval ``(0, pi)`` with homogeneous Dirichlet conditions and the
  sine family ``sqrt(2/pi) sin((j+1) x)``.

Spectral coefficients are real arrays whose last axis has length ``N``;
any leading axes are treated as a batch.  Physical values live on a padded
tensor-product grid on which the trapezoid rule integrates every product of
up to six band-limited fields exactly, so cubic nonlinearities and
``L^4``/``L^6`` norms carry no aliasing error.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

TORUS = "torus"
INTERVAL = "interval"

#: grid points per axis are ``pad * (unpadded resolution)``
DEFAULT_PAD = 3
MIN_PAD = 2
MAX_GRID_POINTS = 2 ** 22


@dataclass(frozen=True)
class DomainSpec:
    kind: str = TORUS
    dimension: int = 1
    mass_squared: float = 1.0

    def __post_init__(self):
        if self.kind not in (TORUS, INTERVAL):
            raise ConfigurationError(f"unknown domain kind {self.kind!r}")
        if self.kind == TORUS and self.dimension not in (1, 2, 3):
            raise ConfigurationError(
                f"torus dimension must be 1, 2 or 3, got {self.dimension}")
        if self.kind == INTERVAL and self.dimension != 1:
            raise ConfigurationError("the Dirichlet interval is one-dimensional")
        if not np.isfinite(self.mass_squared):
            raise ConfigurationError("mass_squared must be finite")
        if self.mass_squared <= -self.lambda0:
            raise ConfigurationError(
                f"mass_squared={self.mass_squared} must exceed "
                f"-lambda0={-self.lambda0} on the {self.kind}")

    @property
    def lambda0(self) -> float:
        """Lowest Laplacian eigenvalue: 0 on the torus, 1 on (0, pi)."""
        return 0.0 if self.kind == TORUS else 1.0

    @property
    def volume(self) -> float:
        if self.kind == TORUS:
            return (2 * np.pi) ** self.dimension
        return np.pi

    @property
    def spectral_gap(self) -> float:
        """``m0^2 + lambda0``, the smallest squared frequency."""
        return self.mass_squared + self.lambda0

    def describe(self) -> dict:
        return {"kind": self.kind, "dimension": self.dimension,
                "mass_squared": self.mass_squared}


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """The ``N`` lowest Laplacian eigenpairs of a domain, plus the
    collocation grid used for pointwise products.

    ``synthesis`` has shape ``(G, N)`` with ``synthesis[i, j] = e_j(x_i)``;
    ``weights`` are the trapezoid weights of the ``G`` grid points.
    """
    domain: DomainSpec
    eigenvalues: np.ndarray
    labels: tuple
    grid_shape: tuple
    points: np.ndarray
    weights: np.ndarray
    synthesis: np.ndarray
    mode_index_map: dict = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.eigenvalues)

    @property
    def omega_sq(self) -> np.ndarray:
        return self.domain.mass_squared + self.eigenvalues

    @property
    def omega(self) -> np.ndarray:
        return np.sqrt(self.omega_sq)

    @property
    def grid_size(self) -> int:
        return len(self.weights)

    def describe(self) -> dict:
        return {**self.domain.describe(), "N": self.N,
                "grid_shape": list(self.grid_shape)}


def _torus_modes(d, N):
    """Lowest N real trigonometric modes on the d-torus.

    Wave vectors are identified up to sign; the representative has its
    first nonzero component positive.  Order: |k|^2, then k
    lexicographically, then cos before sin.
    """
    K = 1
    while True:
        reps = []
        for k in itertools.product(range(-K, K + 1), repeat=d):
            nz = [c for c in k if c != 0]
            if not nz or nz[0] > 0:
                reps.append(k)
        reps.sort(key=lambda k: (sum(c * c for c in k), k))
        modes = []
        for k in reps:
            if not any(k):
                modes.append(("const", k))
            else:
                modes.extend([("cos", k), ("sin", k)])
            if len(modes) >= N:
                break
        if len(modes) >= N:
            last = sum(c * c for c in modes[N - 1][1])
            # every k with |k|^2 <= last has |k_i| <= sqrt(last) <= K
            if last <= K * K:
                return modes[:N]
        K *= 2


def build_basis(domain: DomainSpec, N: int, pad: int = DEFAULT_PAD,
                grid_points: int | None = None) -> SpectralBasis:
    """Enumerate the ``N`` lowest eigenpairs of ``-Laplacian`` on ``domain``.

    ``grid_points`` overrides the per-axis grid size; it must be at least
    twice the unpadded resolution so that cubic products are alias-free.
    """
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise ConfigurationError(f"mode count must be a positive integer, got {N!r}")
    if pad < MIN_PAD:
        raise ConfigurationError(f"padding factor {pad} < {MIN_PAD} aliases cubic terms")

    if domain.kind == TORUS:
        d = domain.dimension
        modes = _torus_modes(d, int(N))
        kmax = max(max(abs(c) for c in k) for _, k in modes)
        unpadded = 2 * kmax + 1
        M = pad * unpadded if grid_points is None else int(grid_points)
        if M < MIN_PAD * unpadded:
            raise ConfigurationError(
                f"grid of {M} points per axis cannot hold {N} modes alias-free "
                f"(need >= {MIN_PAD * unpadded})")
        if M ** d > MAX_GRID_POINTS:
            raise ConfigurationError(f"{N} modes need a {M}^{d} grid, over capacity")
        axis = 2 * np.pi * np.arange(M) / M
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=-1)
        weights = np.full(M ** d, (2 * np.pi / M) ** d)
        vol = domain.volume
        cols, lam, labels = [], [], []
        for kind, k in modes:
            phase = points @ np.asarray(k, dtype=float)
            if kind == "const":
                cols.append(np.full(len(points), 1 / np.sqrt(vol)))
            elif kind == "cos":
                cols.append(np.sqrt(2 / vol) * np.cos(phase))
            else:
                cols.append(np.sqrt(2 / vol) * np.sin(phase))
            lam.append(float(sum(c * c for c in k)))
            labels.append((kind, tuple(int(c) for c in k)))
        grid_shape = (M,) * d
    else:
        n = np.arange(1, N + 1)
        unpadded = N + 1
        M = pad * unpadded if grid_points is None else int(grid_points)
        if M < MIN_PAD * unpadded:
            raise ConfigurationError(
                f"grid of {M} intervals cannot hold {N} sine modes alias-free "
                f"(need >= {MIN_PAD * unpadded})")
        if M + 1 > MAX_GRID_POINTS:
            raise ConfigurationError(f"{N} modes need {M + 1} grid points, over capacity")
        x = np.pi * np.arange(M + 1) / M
        points = x[:, None]
        weights = np.full(M + 1, np.pi / M)
        weights[[0, -1]] *= 0.5
        cols = [np.sqrt(2 / np.pi) * np.sin(j * x) for j in n]
        lam = [float(j * j) for j in n]
        labels = [("sin", (int(j),)) for j in n]
        grid_shape = (M + 1,)

    synthesis = np.ascontiguousarray(np.stack(cols, axis=1))
    synthesis.setflags(write=False)
    eigenvalues = np.asarray(lam)
    eigenvalues.setflags(write=False)
    weights.setflags(write=False)
    points.setflags(write=False)
    return SpectralBasis(
        domain=domain, eigenvalues=eigenvalues, labels=tuple(labels),
        grid_shape=grid_shape, points=points, weights=weights,
        synthesis=synthesis,
        mode_index_map={lab: j for j, lab in enumerate(labels)})


def _check_coeffs(coeffs, basis):
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1:] != (basis.N,):
        raise ValueError(f"expected {basis.N} coefficients on the last axis, got shape {c.shape}")
    return c


def sobolev_norm(coeffs, m: float, basis: SpectralBasis):
    """``||c||_m = sqrt(sum_j omega_j^(2m) c_j^2)``, batched over leading axes."""
    return np.sqrt(sobolev_norm_sq(coeffs, m, basis))


def sobolev_norm_sq(coeffs, m, basis):
    c = _check_coeffs(coeffs, basis)
    return np.sum(basis.omega_sq ** m * c * c, axis=-1)


@dataclass(frozen=True)
class PhysicalField:
    values: np.ndarray
    weights: np.ndarray

    def integrate(self):
        return np.sum(self.values * self.weights, axis=-1)


def to_physical(coeffs, basis: SpectralBasis) -> PhysicalField:
    c = _check_coeffs(coeffs, basis)
    return PhysicalField(c @ basis.synthesis.T, basis.weights)


def to_spectral(field, basis: SpectralBasis) -> np.ndarray:
    """Quadrature projection onto the basis (L^2-orthogonal)."""
    values = field.values if isinstance(field, PhysicalField) else np.asarray(field)
    if values.shape[-1] != basis.grid_size:
        raise ValueError(
            f"field has {values.shape[-1]} grid values, basis grid has {basis.grid_size}")
    return (values * basis.weights) @ basis.synthesis


def lp_norm(field: PhysicalField, p: int):
    if p <= 0 or p % 2:
        raise ValueError(f"only even exponents are supported, got p={p}")
    return np.sum(field.weights * field.values ** p, axis=-1) ** (1.0 / p)


def power_integral(coeffs, p: int, basis: SpectralBasis):
    """``int u^p dx`` for band-limited ``u``; exact for p <= 2*pad."""
    u = to_physical(coeffs, basis).values
    return np.sum(basis.weights * u ** p, axis=-1)


def weyl_exponent(basis: SpectralBasis) -> float:
    """Fitted exponent of lambda_j ~ j^beta over the upper half of the modes."""
    j = np.arange(basis.N)
    sel = (j >= basis.N // 2) & (basis.eigenvalues > 0)
    if sel.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(j[sel] + 1), np.log(basis.eigenvalues[sel]), 1)
    return float(slope)
