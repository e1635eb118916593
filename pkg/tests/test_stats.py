import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fdlkg import NoiseSpec, RngStream, ConfigurationError
from fdlkg.stats import (Histogram, MomentAccumulator, effective_sample_size,
                         integrated_autocorr_time, ks_distance, linear_fit, mean_with_se)

_values = st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=60)


@settings(max_examples=100, deadline=None)
@given(_values, _values)
def test_accumulator_merge_equals_single_pass(a, b):
    left = MomentAccumulator(4, sigmas=(0.1, 1.0)).push(a)
    right = MomentAccumulator(4, sigmas=(0.1, 1.0)).push(b)
    merged = left + right
    whole = MomentAccumulator(4, sigmas=(0.1, 1.0)).push(a + b)
    x = np.asarray(a + b)
    assert merged.count == whole.count == len(x)
    assert merged.mean == pytest.approx(x.mean(), rel=1e-12, abs=1e-12)
    assert merged.m2 == pytest.approx(whole.m2, rel=1e-9, abs=1e-9)
    for p in range(1, 5):
        assert merged.raw_moment(p) == pytest.approx(np.mean(x ** p), rel=1e-11, abs=1e-9)
    assert merged.exp_mean(1.0) == pytest.approx(np.mean(np.exp(x)), rel=1e-12)
    assert merged.min == x.min() and merged.max == x.max()


def test_accumulator_empty_and_dict():
    acc = MomentAccumulator(2)
    acc.push([])
    assert acc.count == 0
    acc.push([1.0, 3.0])
    d = acc.to_dict()
    assert d["mean"] == 2.0 and d["raw_moments"] == [2.0, 5.0]


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=0, max_size=200), st.sampled_from([2, 3, 4]))
def test_histogram_conserves_counts(x, factor):
    h = Histogram.uniform(-2.0, 2.0, 16).fill(x)
    assert h.total == len(x)
    r = h.rebin(factor)
    assert r.total == len(x)
    assert r.counts.sum() + r.overflow + r.underflow == len(x)


def test_histogram_merge_and_csv(tmp_path):
    a = Histogram.uniform(0, 1, 4).fill([0.1, 0.2, 0.9, 1.5])
    b = Histogram.uniform(0, 1, 4).fill([-1.0, 0.6])
    m = a.merge(b)
    assert list(m.counts) == [2, 0, 1, 1] and m.overflow == 1 and m.underflow == 1
    with pytest.raises(ValueError):
        a.merge(Histogram.uniform(0, 2, 4))
    m.write_csv(tmp_path / "h.csv")
    assert len((tmp_path / "h.csv").read_text().splitlines()) == 7
    with pytest.raises(ValueError):
        Histogram([0.0, 0.0, 1.0])


def test_iid_autocorrelation_time_near_one():
    x = np.random.default_rng(0).standard_normal((4, 5000))
    assert integrated_autocorr_time(x) == pytest.approx(1.0, abs=0.15)
    assert effective_sample_size(x) <= x.size


def test_ar1_autocorrelation_time():
    # AR(1) with coefficient phi: tau = (1 + phi) / (1 - phi)
    phi = 0.8
    rng = np.random.default_rng(1)
    x = np.zeros((8, 20000))
    for k in range(1, x.shape[1]):
        x[:, k] = phi * x[:, k - 1] + rng.standard_normal(8)
    assert integrated_autocorr_time(x) == pytest.approx((1 + phi) / (1 - phi), rel=0.1)


def test_mean_with_se_constant_and_independent():
    est = mean_with_se(np.full((2, 10), 3.0))
    assert est.mean == 3.0 and est.se == 0.0
    x = np.random.default_rng(2).standard_normal(400)
    est = mean_with_se(x[None], independent=True)
    assert est.se == pytest.approx(np.std(x, ddof=1) / 20)


def test_ks_and_fit():
    assert ks_distance([1, 2, 3], [1, 2, 3]) == 0.0
    assert ks_distance([0, 0], [1, 1]) == 1.0
    fit = linear_fit([0, 1, 2, 3], [1, 3, 5, 7])
    assert fit["slope"] == pytest.approx(2) and fit["r2"] == pytest.approx(1)


def test_noise_presets(torus1):
    inv = NoiseSpec.from_preset("inverse_sq", torus1)
    assert inv.A0 == pytest.approx(np.sum(torus1.omega_sq ** -2.0))
    assert inv.A1(torus1) == pytest.approx(np.sum(1 / torus1.omega_sq))
    assert inv.nondegenerate and not inv.is_zero
    flat = NoiseSpec.from_preset("flat_first_K", torus1, K=3, amplitude=0.5)
    assert flat.A0 == pytest.approx(0.75) and not flat.nondegenerate
    # "lambda" weights drop the mass term; the two agree for n = 0
    assert flat.A(0, torus1, "lambda") == flat.A0
    assert flat.A(1, torus1, "lambda") == pytest.approx(0.25 * (0 + 1 + 1))
    with pytest.raises(ConfigurationError):
        NoiseSpec.from_preset("custom", torus1)
    with pytest.raises(ConfigurationError):
        NoiseSpec.from_preset("pink", torus1)
    with pytest.raises(ConfigurationError):
        NoiseSpec([-1.0, 1.0])
    with pytest.raises(ConfigurationError):
        NoiseSpec(np.ones(3)).check(torus1)


def test_rng_streams_reproducible_and_distinct():
    a = RngStream(42, 0).generator().standard_normal(5)
    b = RngStream(42, 0).generator().standard_normal(5)
    c = RngStream(42, 1).generator().standard_normal(5)
    d = RngStream(42).child(1).generator().standard_normal(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c) and np.array_equal(c, d)
    assert math.isfinite(RngStream(2 ** 64 - 1).generator().standard_normal())
