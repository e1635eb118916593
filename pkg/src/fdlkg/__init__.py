"""Stochastic damped-driven cubic Klein-Gordon dynamics in a spectral
Galerkin basis, with Gaussian oracles and stationary-measure diagnostics."""
from .config import ExperimentConfig
from .deterministic import DeterministicStepper, StepperConfig, evolve
from .errors import ConfigurationError, ConfigurationWarning, IntegrationBlowup
from .functionals import (FDLParams, FieldState, energy, g1, g2, gamma0, kappa, l1, l2,
                          norm, norm_sq)
from .noise import NoiseSpec, RngStream
from .spectral import DomainSpec, SpectralBasis, build_basis
from .stochastic import RunSpec, SDEStepper, StationaryRun, sde_step, simulate_stationary

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "ConfigurationWarning", "DeterministicStepper", "DomainSpec",
    "ExperimentConfig", "FDLParams", "FieldState", "IntegrationBlowup", "NoiseSpec",
    "RngStream", "RunSpec", "SDEStepper", "SpectralBasis", "StationaryRun", "StepperConfig",
    "build_basis", "energy", "evolve", "g1", "g2", "gamma0", "kappa", "l1", "l2", "norm",
    "norm_sq", "sde_step", "simulate_stationary",
]
