"""Stationary-measure estimation and the checks run against it.

Samples are the thinned states of :func:`~fdlkg.stochastic.simulate_stationary`
with shape (chains, n, N).  Every estimate carries an ESS-based standard
error; one-sided bound checks pass when ``estimate - 3 SE <= bound`` and
equalities when ``|estimate - target| <= 3 SE``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .functionals import FieldState, cubic_term, energy, g1, gamma0, l1, norm_sq
from .noise import NoiseSpec, RngStream
from .spectral import SpectralBasis, sobolev_norm_sq
from .stats import Histogram, MomentAccumulator, ks_distance, mean_with_se
from .stochastic import RunSpec, SDEStepper, StationaryRun, simulate_stationary
from .deterministic import check_finite, n_steps

MIN_ESS = 50
MIN_TAIL_EXCEEDANCES = 20


def _states(samples) -> FieldState:
    if isinstance(samples, StationaryRun):
        return samples.states
    if isinstance(samples, FieldState):
        if samples.u.ndim == 1:
            return FieldState(samples.u[None, None], samples.v[None, None])
        if samples.u.ndim == 2:
            return FieldState(samples.u[None], samples.v[None])
        return samples
    raise TypeError(f"expected samples as StationaryRun or FieldState, got {type(samples)}")


def _z(mean, se, target):
    if se > 0:
        return (mean - target) / se
    return 0.0 if math.isclose(mean, target, rel_tol=1e-12, abs_tol=1e-300) else math.copysign(math.inf, mean - target)


# ----------------------------------------------------------------------------
# accumulation


def accumulate(stream, observables, p_max=4, sigmas=()):
    """Single pass over an iterable of FieldState batches; returns one
    :class:`MomentAccumulator` per named observable."""
    acc = {name: MomentAccumulator(p_max, sigmas) for name in observables}
    for y in stream:
        for name, f in observables.items():
            acc[name].push(f(y))
    return acc


# ----------------------------------------------------------------------------
# bump functions


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_PANELS = 512


def _profile(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _gl(a, b):
    """Gauss-Legendre integral of the profile over [a, b] (arrays)."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    x = 0.5 * (b - a) * _GL_NODES + 0.5 * (b + a)
    return np.sum(0.5 * (b - a) * _GL_WEIGHTS * _profile(x), axis=-1)


class _ProfileIntegral:
    """``F(s) = int_{-1}^s exp(-1/(1-r^2)) dr`` from a cached panel table."""

    def __init__(self, panels=_PANELS):
        self.edges = np.linspace(-1.0, 1.0, panels + 1)
        self.cum = np.concatenate([[0.0], np.cumsum(_gl(self.edges[:-1], self.edges[1:]))])

    def __call__(self, s):
        s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
        k = np.clip(np.searchsorted(self.edges, s, side="right") - 1, 0, len(self.edges) - 2)
        return self.cum[k] + _gl(self.edges[k], s)

    @property
    def total(self):
        return float(self.cum[-1])


_F = None


def _profile_integral():
    global _F
    if _F is None:
        _F = _ProfileIntegral()
    return _F


@dataclass(frozen=True)
class BumpFunction:
    """``h(x) = sign * amplitude * exp(-1/(1-s^2))``, ``s = (x - c)/w``, on
    ``[c - w, c + w]``; ``H(x) = int_0^x h``."""
    center: float
    half_width: float
    amplitude: float = 1.0
    sign: float = 1.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ConfigurationError("bump half-width must be positive")

    def h(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.half_width
        return self.sign * self.amplitude * _profile(s)

    def _G(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.half_width
        return self.sign * self.amplitude * self.half_width * _profile_integral()(s)

    def H(self, x):
        return self._G(x) - self._G(0.0)

    @property
    def mass(self):
        return self.sign * self.amplitude * self.half_width * _profile_integral().total


# ----------------------------------------------------------------------------
# balance and moment checks


def _status(passed, ess):
    if ess < MIN_ESS:
        return "inconclusive"
    return "pass" if passed else "fail"


def check_balance_l1(samples, noise: NoiseSpec, basis: SpectralBasis):
    """Stationary balance ``E[L1] = A0/2``."""
    y = _states(samples)
    est = mean_with_se(l1(y, basis))
    target = noise.A0 / 2
    z = _z(est.mean, est.se, target)
    passed = abs(z) <= 3
    return {**est.to_dict(), "target": target, "z": z, "passed": bool(passed),
            "status": _status(passed, est.ess)}


def g1_gradient(u, v, alpha, basis):
    """Gradient of G1 with respect to the coefficients ``(u, v)``."""
    c0 = basis.domain.spectral_gap
    w2 = basis.omega_sq
    gu = w2 * u + cubic_term(u, basis) + 0.5 * alpha * c0 * v + 0.5 * alpha * alpha * c0 * w2 * u
    gv = v + 0.5 * alpha * c0 * u
    return gu, gv


def _g1_quadratic_form(u, xu, xv, alpha, basis):
    """``xi' H xi`` for the Hessian ``H`` of G1 at ``(u, .)``."""
    c0 = basis.domain.spectral_gap
    w2 = basis.omega_sq
    phys_u = u @ basis.synthesis.T
    phys_x = xu @ basis.synthesis.T
    quartic = 3 * np.sum(basis.weights * phys_u ** 2 * phys_x ** 2, axis=-1)
    return (np.sum(w2 * (1 + 0.5 * alpha * alpha * c0) * xu * xu + alpha * c0 * xu * xv + xv * xv, axis=-1)
            + quartic)


def _g1_hessian_trace(u, q00, q01, q11, alpha, basis):
    """``tr(H Q)`` for the Hessian of G1 at ``(u, .)`` and per-mode covariance Q."""
    c0 = basis.domain.spectral_gap
    w2 = basis.omega_sq
    var_field = (basis.synthesis ** 2) @ q00
    phys_u = u @ basis.synthesis.T
    quartic = 3 * np.sum(basis.weights * phys_u ** 2 * var_field, axis=-1)
    return np.sum(w2 * (1 + 0.5 * alpha * alpha * c0) * q00 + alpha * c0 * q01 + q11) + quartic


def _ito_residual_paths(y0, alpha, T, dt_fine, levels, noise, basis, batch, gen, scheme):
    """Residual paths at every level on the coarse time grid.

    The finest level draws OU increments; coarser levels reuse them through
    ``xi_2h = T_h xi_1 + xi_2`` so all levels share one Brownian path.
    Returns ``times`` and ``r[level]`` of shape (batch, n_coarse + 1), level 0
    being the coarsest.
    """
    factor = 2 ** (levels - 1)
    n_coarse = n_steps(T, dt_fine * factor)
    n_fine = n_coarse * factor
    steppers = [SDEStepper(basis, alpha, noise, dt_fine * 2 ** (levels - 1 - l), scheme)
                for l in range(levels)]
    g0 = g1(y0, alpha, basis)
    drift = 0.5 * alpha * noise.A0
    state = [(np.broadcast_to(y0.u, (batch, basis.N)).copy(),
              np.broadcast_to(y0.v, (batch, basis.N)).copy()) for _ in range(levels)]
    mart = [np.zeros(batch) for _ in range(levels)]
    integ = [np.zeros(batch) for _ in range(levels)]
    l1_prev = [l1(FieldState(*s), basis) for s in state]
    pending = [None] * levels
    cov = []
    for st in steppers:
        l00, l10, l11 = st.chol
        cov.append((l00 * l00, l00 * l10, l10 * l10 + l11 * l11))
    out = np.zeros((levels, batch, n_coarse + 1))
    fine = steppers[-1]
    for k in range(1, n_fine + 1):
        zeta = gen.standard_normal((batch, 2, basis.N))
        xi = fine.increments(zeta)
        for l in range(levels - 1, -1, -1):
            st = steppers[l]
            span = 2 ** (levels - 1 - l)
            if pending[l] is None:
                pending[l] = xi
            else:
                fu, fv = fine.flow(*pending[l])
                pending[l] = (fu + xi[0], fv + xi[1])
            if k % span:
                continue
            u, v = state[l]
            tu, tv = st.flow(u, v)
            gu, gv = g1_gradient(tu, tv, alpha, basis)
            xu, xv = pending[l]
            mart[l] += np.sum(gu * xu + gv * xv, axis=-1)
            mart[l] += 0.5 * (_g1_quadratic_form(tu, xu, xv, alpha, basis)
                              - _g1_hessian_trace(tu, *cov[l], alpha, basis))
            u, v = tu + pending[l][0], tv + pending[l][1]
            v = st._kick(u, v)
            pending[l] = None
            check_finite(u, v, k * fine.dt)
            state[l] = (u, v)
            l1_now = l1(FieldState(u, v), basis)
            integ[l] += 0.5 * st.dt * (l1_prev[l] + l1_now)
            l1_prev[l] = l1_now
            if k % factor == 0:
                t = k * fine.dt
                out[l, :, k // factor] = (g1(FieldState(u, v), alpha, basis) - mart[l]
                                          + alpha * integ[l] - g0 - drift * t)
    times = np.arange(n_coarse + 1) * dt_fine * factor
    return times, out


def check_ito_identity_g1(y0: FieldState, alpha, T, ensemble_size, noise: NoiseSpec,
                          basis: SpectralBasis, dt, rng, levels=3, batch=None):
    """Itô identity ``E G1(y_t) + alpha int E L1 - G1(y0) - (alpha/2) A0 t = 0``.

    Runs coupled ensembles at ``dt, dt/2, ..., dt/2^(levels-1)`` (Lie scheme)
    sharing one Brownian path per trajectory.  Each trajectory's residual is
    de-noised by subtracting the exactly mean-zero sum
    ``sum_k grad G1(T y_k) . xi_k``.

    Reports the residual at the finest step with its standard error, the
    sup-norm differences between successive levels and their ratio (about 2
    for a first-order weak error), and the Richardson-extrapolated residual
    (diagnostic; it still carries the second-order error).
    """
    if levels < 3:
        raise ConfigurationError("dt-halving needs at least three levels")
    if y0.u.ndim != 1:
        raise ConfigurationError("the Itô check starts every trajectory from one fixed state")
    gen = rng.generator() if isinstance(rng, RngStream) else np.random.default_rng(rng)
    batch = batch or min(ensemble_size, 256)
    parts = []
    done = 0
    while done < ensemble_size:
        b = min(batch, ensemble_size - done)
        times, r = _ito_residual_paths(y0, alpha, T, dt / 2 ** (levels - 1), levels,
                                       noise, basis, b, gen, "lie")
        parts.append(r)
        done += b
    r = np.concatenate(parts, axis=1)          # (levels, ensemble, n_times)
    M = r.shape[1]
    mean = r.mean(axis=1)
    se = r.std(axis=1, ddof=1) / math.sqrt(M)
    diffs = [mean[l] - mean[l + 1] for l in range(levels - 1)]
    diff_se = [(r[l] - r[l + 1]).std(axis=0, ddof=1) / math.sqrt(M) for l in range(levels - 1)]
    sup_diff = [float(np.max(np.abs(d))) for d in diffs]
    ratios = [sup_diff[l] / sup_diff[l + 1] if sup_diff[l + 1] > 0 else math.inf
              for l in range(levels - 2)]
    fine = mean[-1]
    fine_se = se[-1]
    bias_fine = np.abs(diffs[-1])  # first-order error at the finest step
    rich = 2 * mean[-1] - mean[-2]
    rich_se = (2 * r[-1] - r[-2]).std(axis=0, ddof=1) / math.sqrt(M)
    within = bool(np.all(np.abs(fine) <= 3 * fine_se + bias_fine + 1e-15))
    return {
        "times": times, "residual": mean, "residual_se": se,
        "max_abs_residual": float(np.max(np.abs(fine))),
        "max_residual_se": float(np.max(fine_se)),
        "level_dts": [dt / 2 ** l for l in range(levels)],
        "sup_level_differences": sup_diff,
        "level_difference_se": [float(np.max(s)) for s in diff_se],
        "bias_ratios": ratios,
        "richardson_max_abs": float(np.max(np.abs(rich))),
        "richardson_max_se": float(np.max(rich_se)),
        "within_error": within,
        "ensemble_size": M,
    }


def moment_bound_report(samples, p_list, alpha, noise: NoiseSpec, basis: SpectralBasis):
    """``E G1^p <= (2 p A0 / gamma0)^p`` at stationarity."""
    y = _states(samples)
    g = g1(y, alpha, basis)
    g0 = gamma0(basis.domain)
    out = {}
    for p in p_list:
        est = mean_with_se(g ** p)
        bound = (2 * p * noise.A0 / g0) ** p
        out[int(p)] = {**est.to_dict(), "bound": bound,
                       "passed": bool(est.mean - 3 * est.se <= bound)}
    return out


def h21_norm_sq(y: FieldState, basis):
    return norm_sq(y, 2, 1, basis)


def check_h21_moment(runs, basis: SpectralBasis):
    """``E ||y||_{2,1}^2`` across a sweep; ``runs`` maps alpha to samples.

    Fits ``estimate = c + s log(alpha)`` weighted by the per-point standard
    errors.  Growth as alpha decreases means ``s < 0``; the check passes
    when ``s >= -3 SE(s)``.
    """
    alphas = sorted(runs, reverse=True)
    table = []
    for a in alphas:
        est = mean_with_se(h21_norm_sq(_states(runs[a]), basis))
        table.append({"alpha": a, **est.to_dict(), "finite": bool(np.isfinite(est.mean))})
    out = {"table": table, "finite": all(r["finite"] for r in table)}
    if len(alphas) < 2:
        out.update(slope=None, slope_se=None, passed=out["finite"])
        return out
    x = np.log(np.asarray(alphas))
    y = np.array([r["mean"] for r in table])
    s = np.array([r["se"] for r in table])
    w = 1 / np.maximum(s, 1e-300) ** 2
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = float(np.sum(w * (x - xm) * y) / sxx)
    slope_se = float(math.sqrt(1 / sxx))
    out.update(slope=slope, slope_se=slope_se,
               passed=bool(out["finite"] and slope >= -3 * slope_se))
    return out


def check_balance_identity(samples, bump: BumpFunction, noise: NoiseSpec, basis: SpectralBasis):
    """Stationary identity for a test function of the energy.

    Reports the four combinations
    ``E[H(E)(c - ||v||_1^2)] + s/2 E[h(E) sum a_j^2 v_j^2]`` for
    ``c in {A0, A0/2}``, ``s in {+1, -1}``.  Itô's formula for ``H(E)``
    makes ``(A0/2, +1)`` vanish; that variant decides ``passed``.
    """
    y = _states(samples)
    E = energy(y, basis)
    v1 = sobolev_norm_sq(y.v, 1, basis)
    forcing = np.sum(noise.a ** 2 * y.v ** 2, axis=-1)
    HE, hE = bump.H(E), bump.h(E)
    variants = {}
    for cname, c in (("A0", noise.A0), ("A0/2", noise.A0 / 2)):
        for sname, s in (("+", 1.0), ("-", -1.0)):
            est = mean_with_se(HE * (c - v1) + s * 0.5 * hE * forcing)
            z = _z(est.mean, est.se, 0.0)
            variants[f"{cname},{sname}"] = {**est.to_dict(), "z": z, "vanishes": bool(abs(z) <= 3)}
    chosen = variants["A0/2,+"]
    return {"variants": variants, "residual": chosen["mean"], "se": chosen["se"],
            "passed": chosen["vanishes"],
            "vanishing": [k for k, v in variants.items() if v["vanishes"]],
            "bump": {"center": bump.center, "half_width": bump.half_width,
                     "amplitude": bump.amplitude, "sign": bump.sign}}


def hamiltonian_density_report(samples, basis: SpectralBasis, bins=64, refinements=2,
                               quantile=0.995, atom_tol=1e-10):
    """Histograms of ``E`` at bin widths ``w, w/2, ...``; for a bounded
    density the largest bin mass halves with the width.  Also counts
    samples with ``u`` numerically zero."""
    y = _states(samples)
    E = energy(y, basis)
    ess = mean_with_se(E).ess
    hi = float(np.quantile(E, quantile)) if np.ptp(E) > 0 else float(E.max()) + 1.0
    lo = 0.0 if hi > 0 else -1.0
    finest = Histogram.uniform(lo, hi, bins * 2 ** refinements).fill(E)
    hists = [finest.rebin(2 ** (refinements - i)) for i in range(refinements + 1)]
    masses = [h.max_bin_mass() for h in hists]
    ratios = [masses[i + 1] / masses[i] if masses[i] > 0 else math.nan for i in range(refinements)]
    unorm = np.sqrt(np.sum(y.u ** 2, axis=-1))
    atoms = int(np.sum(unorm < atom_tol))
    halving = all(0.35 <= r <= 0.65 for r in ratios)
    return {"histograms": hists, "max_bin_mass": masses, "mass_ratios": ratios,
            "halving": bool(halving), "atom_count": atoms, "atom_fraction": atoms / E.size,
            "ess": ess, "enough_samples": bool(ess >= 1000),
            "bin_widths": [float(np.diff(h.edges[:2])[0]) for h in hists]}


def tail_sigma(a_gt_1, basis: SpectralBasis, noise: NoiseSpec):
    if not a_gt_1 > 1:
        raise ConfigurationError(f"the tail exponent needs a > 1, got {a_gt_1}")
    return gamma0(basis.domain) / (2 * a_gt_1 * math.e * noise.A0)


def tail_check(samples, a_gt_1, basis: SpectralBasis, noise: NoiseSpec, grid=40):
    """``P(E >= R) <= C exp(-sigma R)`` with ``sigma = gamma0/(2 a e A0)``.

    The envelope constant is anchored at the median ``R_m`` of ``E``
    (``C = 1/2 exp(sigma R_m)``); the empirical tail must stay below the
    envelope, within three standard errors, at every ``R >= R_m`` with at
    least 20 exceedances.
    """
    sigma = tail_sigma(a_gt_1, basis, noise)
    y = _states(samples)
    E = energy(y, basis)
    flat = np.sort(E.ravel())
    n = flat.size
    ess = mean_with_se(E).ess
    exp_moment = mean_with_se(np.exp(sigma * E))
    if np.ptp(flat) == 0:
        return {"sigma": sigma, "status": "pass", "passed": True, "R": [], "tail": [],
                "envelope": [], "exp_moment": exp_moment.to_dict()}
    R_med = float(np.median(flat))
    R_max = float(flat[n - MIN_TAIL_EXCEEDANCES]) if n > MIN_TAIL_EXCEEDANCES else R_med
    R = np.linspace(R_med, R_max, grid)
    tail = 1 - np.searchsorted(flat, R, side="left") / n
    logC = math.log(0.5) + sigma * R_med
    env = np.exp(logC - sigma * R)
    se = np.sqrt(tail * (1 - tail) / ess)
    ok = tail <= env + 3 * se
    passed = bool(np.all(ok))
    status = "inconclusive" if n <= MIN_TAIL_EXCEEDANCES else ("pass" if passed else "fail")
    return {"sigma": sigma, "R": R, "tail": tail, "envelope": env, "tail_se": se,
            "log_C": logC, "passed": passed, "status": status,
            "exp_moment": exp_moment.to_dict()}


# ----------------------------------------------------------------------------
# alpha sweep


def alpha_sweep(alphas, noise: NoiseSpec, basis: SpectralBasis, run: RunSpec, rng,
                nonlinear=True, threads=1, p_list=(1, 2, 3)):
    """Stationary runs over decreasing ``alphas`` with per-alpha checks and
    Kolmogorov-Smirnov distances between consecutive laws of ``E`` and of
    ``||y||_{2,1}``."""
    alphas = [float(a) for a in alphas]
    if any(not 0 < a < 1 for a in alphas):
        raise ConfigurationError("sweep alphas must lie in (0, 1)")
    if any(a <= b for a, b in zip(alphas, alphas[1:])):
        raise ConfigurationError("sweep alphas must be strictly decreasing")
    seed = rng.master_seed if isinstance(rng, RngStream) else int(rng)
    runs, per_alpha = {}, []
    for i, a in enumerate(alphas):
        res = simulate_stationary(a, noise, basis, run, RngStream(seed, 1000 * (i + 1)),
                                  nonlinear=nonlinear, threads=threads)
        runs[a] = res
        per_alpha.append({"alpha": a, "balance_l1": check_balance_l1(res, noise, basis),
                          "g1_moments": moment_bound_report(res, p_list, a, noise, basis),
                          "samples": res.n_samples})
    h21 = check_h21_moment(runs, basis)
    ks = []
    for a, b in zip(alphas, alphas[1:]):
        ya, yb = runs[a].states, runs[b].states
        ks.append({"alphas": [a, b],
                   "energy": ks_distance(energy(ya, basis), energy(yb, basis)),
                   "norm21": ks_distance(np.sqrt(h21_norm_sq(ya, basis)),
                                         np.sqrt(h21_norm_sq(yb, basis)))})
    trend = None
    if len(ks) >= 2:
        e = [k["energy"] for k in ks]
        trend = bool(all(x >= y for x, y in zip(e, e[1:])))
    return {"per_alpha": per_alpha, "h21": h21, "ks": ks, "ks_nonincreasing": trend,
            "runs": runs}
