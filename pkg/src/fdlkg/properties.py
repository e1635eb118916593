"""Pointwise inequalities between the functionals, checked on random states."""
from __future__ import annotations

import numpy as np

from .functionals import FDLParams, FieldState, cubic_term, kappa, l2, l6_sixth, norm_sq, quartic
from .spectral import SpectralBasis, sobolev_norm_sq

#: alphas at which every inequality of the suite is claimed
SUITE_ALPHAS = (0.05, 0.1, 0.2, 0.4, 0.5)
REL_SLACK = 1e-12


def random_states(basis: SpectralBasis, n, rng, max_log_amplitude=2.0):
    """Random states with spectral decay ``omega^-s`` (s uniform in [0, 3])
    and overall amplitude log-uniform in ``[1e-3, 10^max_log_amplitude]``,
    so both the quadratic and the quartic regimes are covered."""
    s = rng.uniform(0, 3, size=(n, 1))
    amp = 10 ** rng.uniform(-3, max_log_amplitude, size=(n, 1))
    decay = basis.omega[None, :] ** (-s)
    u = amp * decay * rng.standard_normal((n, basis.N))
    v = amp * decay * rng.standard_normal((n, basis.N)) * rng.uniform(0, 3, size=(n, 1))
    return FieldState(u, v)


def _alpha_free(y: FieldState, basis):
    q = quartic(y.u, basis)
    return {"q": q, "E": 0.5 * norm_sq(y, 1, 0, basis) + 0.25 * q,
            "uv": np.sum(y.u * y.v, axis=-1),
            "uv2": np.sum(basis.omega_sq * y.u * y.v, axis=-1),
            "u0": sobolev_norm_sq(y.u, 0, basis), "u1": sobolev_norm_sq(y.u, 1, basis),
            "u2": sobolev_norm_sq(y.u, 2, basis), "v0": sobolev_norm_sq(y.v, 0, basis),
            "v1": sobolev_norm_sq(y.v, 1, basis)}


def inequality_values(y: FieldState, params: FDLParams, basis: SpectralBasis, cache=None):
    """``name -> (larger side, smaller side)`` for every claimed inequality.

    G1, G2, L1 and L2 are assembled from alpha-free pieces (norms, the
    quartic integral) so that a sweep over alpha costs one quadrature pass;
    ``cache`` holds those pieces.
    """
    c = cache or _alpha_free(y, basis)
    c0 = basis.domain.spectral_gap
    k = kappa(basis.domain)
    a = params.alpha
    delta = 1 - params.epsilon_l2
    E = c["E"]
    G1 = E + 0.5 * a * c0 * c["uv"] + 0.25 * a * a * c0 * c["u1"]
    G2 = E + 0.5 * a * c["uv2"] + 0.25 * a * a * c["u2"]
    L1 = 0.5 * (c0 * c["u1"] + 2 * c["v1"] - c0 * c["v0"] + c0 * c["q"])
    L2 = 0.5 * ((1 - params.epsilon_l2) * c["u2"] + c["v1"])
    return {
        "G1 >= E/4": (G1, E / 4),
        "G2 >= E/4": (G2, E / 4),
        "G1 <= (2+c0)/(2 kappa^2) L1": ((2 + c0) / (2 * k * k) * L1, G1),
        "G2 <= (5E+L2)/4": ((5 * E + L2) / 4, G2),
        "L1 >= kappa/2 (|y|_{1,1}^2 + |u|_4^4)": (L1, 0.5 * k * (c["u1"] + c["v1"] + c["q"])),
        "L2 >= delta/2 |y|_{2,1}^2": (L2, 0.5 * delta * (c["u2"] + c["v1"])),
        "|u|_2^2 >= c0 |u|_1^2": (c["u2"], c0 * c["u1"]),
        "|u|_1^2 >= c0 |u|_0^2": (c["u1"], c0 * c["u0"]),
        "|u|_2^2 >= c0^2 |u|_0^2": (c["u2"], c0 * c0 * c["u0"]),
    }


def g2_control_ratio(y: FieldState, params: FDLParams, basis: SpectralBasis):
    """``(dG2/dt / alpha + L2) / ||u||_{L^6}^6`` along the unforced damped field.

    The G2 control only claims this is bounded by some alpha-independent
    constant C; the suite reports the largest observed value.
    """
    a = params.alpha
    w2 = basis.omega_sq
    cub = cubic_term(y.u, basis)
    gu = w2 * y.u + cub + 0.5 * a * w2 * y.v + 0.5 * a * a * w2 * w2 * y.u
    gv = y.v + 0.5 * a * w2 * y.u
    fv = -w2 * y.u - a * w2 * y.v - cub
    rate = np.sum(gu * y.v + gv * fv, axis=-1)
    six = l6_sixth(y, basis)
    excess = rate / a + l2(y, params, basis)
    return np.divide(excess, six, out=np.full_like(excess, -np.inf), where=six > 0)


def property_suite(basis: SpectralBasis, n_states, rng, alphas=SUITE_ALPHAS, epsilon_l2=0.1):
    """Violation counts (beyond ``1e-12`` relative slack) per inequality and alpha."""
    y = random_states(basis, n_states, rng)
    cache = _alpha_free(y, basis)
    out = {}
    for a in alphas:
        params = FDLParams(a, epsilon_l2)
        for name, (big, small) in inequality_values(y, params, basis, cache).items():
            scale = np.maximum(np.abs(big), np.abs(small))
            bad = small - big > REL_SLACK * scale
            worst = float(np.max((small - big) / np.where(scale > 0, scale, 1.0)))
            key = f"{name} @ alpha={a}"
            out[key] = {"violations": int(bad.sum()), "worst_relative_gap": worst}
    return out


def g2_constant_report(basis: SpectralBasis, n_states, rng, alphas=SUITE_ALPHAS, epsilon_l2=0.1):
    """Largest observed G2 control ratio per alpha (see :func:`g2_control_ratio`)."""
    y = random_states(basis, n_states, rng)
    return {a: float(np.max(g2_control_ratio(y, FDLParams(a, epsilon_l2), basis))) for a in alphas}
