"""Forcing amplitudes and reproducible random streams."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

PRESETS = ("inverse_sq", "flat_first_K", "custom")


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Per-mode forcing amplitudes ``a_j``; mode j is driven by ``a_j dbeta_j``.

    ``A(n, basis) = sum_j a_j^2 (m0^2 + lambda_j)^n`` (weights
    ``omega_j^(2n)``); ``A(n, basis, weights="lambda")`` gives the
    ``sum_j a_j^2 lambda_j^n`` variant.  Both agree for n = 0.
    """
    a: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 1:
            raise ConfigurationError("noise amplitudes must be a 1-D array")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ConfigurationError("noise amplitudes must be finite and nonnegative")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @property
    def N(self):
        return len(self.a)

    @property
    def A0(self):
        return float(np.sum(self.a ** 2))

    def A(self, n, basis, weights="omega"):
        self.check(basis)
        w = basis.omega_sq if weights == "omega" else basis.eigenvalues
        return float(np.sum(self.a ** 2 * w ** n))

    def A1(self, basis):
        return self.A(1, basis)

    @property
    def nondegenerate(self):
        return bool(np.all(self.a > 0))

    @property
    def is_zero(self):
        return not np.any(self.a)

    def check(self, basis):
        if self.N != basis.N:
            raise ConfigurationError(f"noise has {self.N} amplitudes, basis has {basis.N} modes")

    def describe(self):
        return {"profile": self.name, "a": [float(x) for x in self.a]}

    @classmethod
    def inverse_sq(cls, basis):
        """``a_j = omega_j^-2``: finite A1 in the continuum limit, all a_j > 0."""
        return cls(1.0 / basis.omega_sq, "inverse_sq")

    @classmethod
    def flat_first_K(cls, basis, K, amplitude=1.0):
        a = np.zeros(basis.N)
        a[:K] = amplitude
        return cls(a, "flat_first_K")

    @classmethod
    def zero(cls, basis):
        return cls(np.zeros(basis.N), "zero")

    @classmethod
    def from_preset(cls, name, basis, K=None, amplitude=1.0, values=None):
        if name == "inverse_sq":
            return cls(amplitude / basis.omega_sq, "inverse_sq")
        if name == "flat_first_K":
            if K is None:
                raise ConfigurationError("flat_first_K needs K")
            return cls.flat_first_K(basis, int(K), amplitude)
        if name == "custom":
            if values is None:
                raise ConfigurationError("custom noise needs explicit amplitudes")
            return cls(np.asarray(values, dtype=float), "custom")
        raise ConfigurationError(f"unknown noise preset {name!r}; expected one of {PRESETS}")


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream keyed by ``(master_seed, stream_id)``.

    Streams with different ids are statistically independent (Philox keyed
    through a SeedSequence spawn key) and each is reproducible on its own.
    """
    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed) & (2 ** 64 - 1),
                                    spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, stream_id):
        return RngStream(self.master_seed, stream_id)
