"""Mergeable online statistics and autocorrelation-aware standard errors."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp


class MomentAccumulator:
    """Single-pass statistics of a scalar observable that merge across shards.

    Tracks count, mean and centered second moment (Chan/Welford update),
    Kahan-compensated raw power sums up to ``p_max``, log-sum-exp of
    ``sigma * x`` for each requested ``sigma``, and the extremes.
    """

    def __init__(self, p_max=4, sigmas=()):
        self.p_max = int(p_max)
        self.sigmas = tuple(float(s) for s in sigmas)
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0
        self._psum = np.zeros(self.p_max)
        self._pcomp = np.zeros(self.p_max)
        self._lse = np.full(len(self.sigmas), -np.inf)
        self.min = np.inf
        self.max = -np.inf

    def _like(self):
        return MomentAccumulator(self.p_max, self.sigmas)

    def push(self, values):
        x = np.asarray(values, dtype=float).ravel()
        if x.size == 0:
            return self
        other = self._like()
        other.count = x.size
        other.mean = float(np.mean(x))
        other.m2 = float(np.sum((x - other.mean) ** 2))
        other._psum = np.array([math.fsum(x ** p) for p in range(1, self.p_max + 1)])
        other._lse = np.array([logsumexp(s * x) for s in self.sigmas])
        other.min = float(x.min())
        other.max = float(x.max())
        self._absorb(other)
        return self

    def _absorb(self, other):
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            self._psum, self._pcomp = other._psum.copy(), other._pcomp.copy()
            self._lse = other._lse.copy()
            self.min, self.max = other.min, other.max
            return
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * other.count / n
        self.m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        # Kahan-compensated addition of the raw power sums
        y = other._psum - other._pcomp - self._pcomp
        t = self._psum + y
        self._pcomp = (t - self._psum) - y
        self._psum = t
        self._lse = np.logaddexp(self._lse, other._lse)
        self.min = min(self.min, other.min)
        self.max = max(self.max, other.max)

    def merge(self, other):
        if (other.p_max, other.sigmas) != (self.p_max, self.sigmas):
            raise ValueError("cannot merge accumulators with different configurations")
        out = self._like()
        out._absorb(self)
        out._absorb(other)
        return out

    __add__ = merge

    @property
    def variance(self):
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    def raw_moment(self, p):
        if not 1 <= p <= self.p_max:
            raise ValueError(f"power {p} not tracked (p_max={self.p_max})")
        return self._psum[p - 1] / self.count

    def exp_mean(self, sigma):
        """``mean(exp(sigma * x))`` for a tracked ``sigma``."""
        i = self.sigmas.index(float(sigma))
        return float(np.exp(self._lse[i] - np.log(self.count)))

    def to_dict(self):
        out = {"count": self.count, "mean": self.mean, "variance": self.variance,
               "min": self.min, "max": self.max,
               "raw_moments": [self.raw_moment(p) for p in range(1, self.p_max + 1)]}
        if self.sigmas:
            out["exp_means"] = {repr(s): self.exp_mean(s) for s in self.sigmas}
        return out


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray = None
    underflow: int = 0
    overflow: int = 0

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        if self.edges.ndim != 1 or len(self.edges) < 2 or np.any(np.diff(self.edges) <= 0):
            raise ValueError("histogram edges must be strictly increasing")
        if self.counts is None:
            self.counts = np.zeros(len(self.edges) - 1, dtype=np.int64)

    @classmethod
    def uniform(cls, lo, hi, bins):
        return cls(np.linspace(lo, hi, bins + 1))

    def fill(self, values):
        x = np.asarray(values, dtype=float).ravel()
        self.underflow += int(np.sum(x < self.edges[0]))
        self.overflow += int(np.sum(x > self.edges[-1]))
        inside = x[(x >= self.edges[0]) & (x <= self.edges[-1])]
        self.counts += np.histogram(inside, bins=self.edges)[0]
        return self

    @property
    def total(self):
        return int(self.counts.sum()) + self.underflow + self.overflow

    def rebin(self, factor):
        """Merge ``factor`` adjacent bins; trailing bins that do not fill a
        group are folded into the overflow count."""
        nb = len(self.counts) // factor
        kept = self.counts[:nb * factor].reshape(nb, factor).sum(axis=1)
        dropped = int(self.counts[nb * factor:].sum())
        return Histogram(self.edges[:nb * factor + 1:factor], kept,
                         self.underflow, self.overflow + dropped)

    def max_bin_mass(self):
        return float(self.counts.max() / self.total) if self.total else 0.0

    def merge(self, other):
        if not np.array_equal(self.edges, other.edges):
            raise ValueError("cannot merge histograms with different edges")
        return Histogram(self.edges, self.counts + other.counts,
                         self.underflow + other.underflow, self.overflow + other.overflow)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lo", "hi", "count"])
            w.writerow(["-inf", repr(float(self.edges[0])), self.underflow])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
            w.writerow([repr(float(self.edges[-1])), "inf", self.overflow])


def _autocov(x):
    """Per-chain autocovariance at all lags via FFT; x has shape (chains, n)."""
    n = x.shape[-1]
    xc = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size, axis=-1)
    return np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n] / n


def integrated_autocorr_time(x):
    """Integrated autocorrelation time of (chains, n) draws.

    Multi-chain autocorrelation (within-chain autocovariance relative to the
    pooled variance estimate) truncated by Geyer's initial positive and
    initial monotone sequence rules.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m, n = x.shape
    if n < 4:
        return 1.0
    acov = _autocov(x)
    W = np.mean(acov[:, 0]) * n / (n - 1)
    chain_means = x.mean(axis=1)
    B_over_n = np.var(chain_means, ddof=1) if m > 1 else 0.0
    var_plus = W * (n - 1) / n + B_over_n
    if var_plus <= 0 or not np.isfinite(var_plus):
        return 1.0
    rho = 1 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2 * pair
        prev = pair
    return max(tau, 1.0 / np.log10(max(m * n, 10)))


def effective_sample_size(x):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    total = x.size
    return float(min(total, total / integrated_autocorr_time(x)))


@dataclass
class MeanEstimate:
    mean: float
    se: float
    ess: float
    count: int
    std: float = field(default=0.0)

    def to_dict(self):
        return {"mean": self.mean, "se": self.se, "ess": self.ess,
                "count": self.count, "std": self.std}


def mean_with_se(x, independent=False):
    """Mean of (chains, n) correlated draws with an ESS-based standard error.

    ``independent=True`` treats every entry as an independent draw.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mean = float(np.mean(x))
    std = float(np.std(x, ddof=1)) if x.size > 1 else 0.0
    if std == 0.0:
        return MeanEstimate(mean, 0.0, float(x.size), x.size, 0.0)
    ess = float(x.size) if independent else effective_sample_size(x)
    return MeanEstimate(mean, std / math.sqrt(ess), ess, x.size, std)


def ks_distance(a, b):
    """Two-sample Kolmogorov-Smirnov statistic."""
    return float(stats.ks_2samp(np.ravel(a), np.ravel(b)).statistic)


def linear_fit(x, y):
    """Least-squares line with slope standard error and R^2."""
    fit = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    se = float(fit.stderr) if len(x) > 2 else float("nan")
    return {"slope": float(fit.slope), "intercept": float(fit.intercept),
            "slope_se": se, "r2": float(fit.rvalue ** 2)}
