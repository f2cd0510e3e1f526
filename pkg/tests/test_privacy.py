import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from dptransfer import privacy
from dptransfer.exceptions import InvalidArgumentError
from dptransfer.privacy import DpParams

DEFAULT = DpParams(0.1, 1e-5, 1.0)


def direct_inverse(t, eps, delta, d):
    """Closed-form inverse evaluated one scalar at a time."""
    lo, hi = (1 - delta) / 2, (1 + delta) / 2
    if t < lo:
        return (d / eps) * math.log(2 * t / (1 - delta))
    if t > hi:
        return -(d / eps) * math.log(2 * (1 - t) / (1 - delta))
    return 0.0


class TestDpParams:
    @pytest.mark.parametrize("kwargs", [dict(epsilon=0), dict(epsilon=-1), dict(delta=0), dict(delta=1.5), dict(d=0)])
    def test_rejects_out_of_range(self, kwargs):
        with pytest.raises(InvalidArgumentError):
            DpParams(**kwargs)

    def test_defaults(self):
        assert DpParams() == DpParams(0.1, 1e-5, 1.0)
        assert DEFAULT.expected_magnitude == pytest.approx(9.9999, rel=1e-12)


class TestInverseCdf:
    def test_centre_is_zero(self):
        for dp in (DEFAULT, DpParams(2.0, 0.3, 0.5)):
            assert privacy.inverse_cdf(0.5, dp) == 0.0

    def test_known_value(self):
        expected = -10 * math.log(0.2 / (1 - 1e-5))
        assert privacy.inverse_cdf(0.9, DEFAULT) == pytest.approx(expected, rel=1e-14)
        # the rounded figure 16.0944 is -10 ln 0.2; the delta term shifts it by -1e-4
        assert privacy.inverse_cdf(0.9, DEFAULT) == pytest.approx(16.0944, abs=5e-4)

    def test_matches_direct_evaluation(self):
        t = np.random.default_rng(0).uniform(1e-9, 1 - 1e-9, 2000)
        got = privacy.inverse_cdf(t, DEFAULT)
        ref = np.array([direct_inverse(v, 0.1, 1e-5, 1.0) for v in t])
        np.testing.assert_allclose(got, ref, rtol=1e-10, atol=1e-10)

    def test_closed_flat_interval(self):
        dp = DpParams(1.0, 0.25, 1.0)
        edges = np.array([0.375, 0.625, 0.5])
        np.testing.assert_array_equal(privacy.inverse_cdf(edges, dp), 0.0)

    @settings(max_examples=200)
    @given(st.floats(1e-12, 1 - 1e-12), st.floats(0.01, 10), st.floats(1e-8, 0.9))
    def test_antisymmetric(self, t, eps, delta):
        dp = DpParams(eps, delta, 1.0)
        assert privacy.inverse_cdf(t, dp) == pytest.approx(-privacy.inverse_cdf(1 - t, dp), rel=1e-6, abs=1e-9)

    @settings(max_examples=50)
    @given(st.lists(st.floats(1e-9, 1 - 1e-9), min_size=2, max_size=50))
    def test_non_decreasing(self, ts):
        v = privacy.inverse_cdf(np.sort(ts), DEFAULT)
        assert np.all(np.diff(v) >= 0)

    @settings(max_examples=200)
    @given(st.floats(1e-9, 1 - 1e-9))
    def test_cdf_round_trip(self, t):
        v = privacy.inverse_cdf(t, DEFAULT)
        if v != 0:
            assert privacy.cdf(v, DEFAULT) == pytest.approx(t, abs=1e-10)

    @pytest.mark.parametrize("t", [0.0, 1.0, -0.1, float("nan")])
    def test_rejects_closed_endpoints(self, t):
        with pytest.raises(InvalidArgumentError):
            privacy.inverse_cdf(t, DEFAULT)


class TestDensity:
    def test_peak(self):
        assert privacy.density(1e-300, DEFAULT) == pytest.approx((1 - 1e-5) * 0.05, rel=1e-12)
        assert privacy.density(0.0, DEFAULT) == pytest.approx(0.04999950, abs=1e-10)

    def test_normalised(self):
        dp = DEFAULT
        half, _ = integrate.quad(lambda v: privacy.density(v, dp), 0, 10 * dp.scale, limit=200)
        tail = (1 - dp.delta) * 0.5 * math.exp(-10)
        assert 2 * (half + tail) + dp.delta == pytest.approx(1.0, abs=1e-6)

    def test_symmetric(self):
        v = np.linspace(-50, 50, 101)
        np.testing.assert_array_equal(privacy.density(v, DEFAULT), privacy.density(-v, DEFAULT))

    def test_cdf_jump_at_zero(self):
        dp = DpParams(1.0, 0.2, 1.0)
        assert privacy.cdf(-1e-15, dp) == pytest.approx(0.4)
        assert privacy.cdf(0.0, dp) == pytest.approx(0.6)


class TestSampling:
    def test_mean_magnitude(self):
        v = privacy.sample_noise(1_000_000, DEFAULT, seed=1)
        assert np.mean(np.abs(v)) == pytest.approx(9.9999, rel=0.02)

    def test_zero_fraction(self):
        n = 10_000_000
        v = privacy.sample_noise(n, DEFAULT, seed=2)
        frac = np.mean(v == 0)
        assert abs(frac - 1e-5) <= 4 * math.sqrt(1e-5 / n)

    def test_sign_balance(self):
        v = privacy.sample_noise(1_000_000, DEFAULT, seed=3)
        assert abs(np.mean(np.sign(v))) <= 0.005

    def test_open_uniforms(self):
        u = privacy.open_uniform(privacy.make_rng(0), 100_000)
        assert u.min() > 0 and u.max() < 1

    def test_rejects_empty(self):
        with pytest.raises(InvalidArgumentError):
            privacy.sample_noise(0, DEFAULT, 0)


class TestPerturb:
    def test_near_one_delta_keeps_data(self):
        Y = np.random.default_rng(0).standard_normal((4, 500))
        out = privacy.perturb(Y, DpParams(0.1, 1 - 1e-12, 1.0), seed=0)
        np.testing.assert_array_equal(out, Y)

    def test_residual_is_noise(self):
        Y = np.random.default_rng(1).uniform(0, 1, (100, 2000))
        resid = privacy.perturb(Y, DEFAULT, seed=4) - Y
        assert np.mean(np.abs(resid)) == pytest.approx(9.9999, rel=0.02)

    def test_deterministic_and_non_mutating(self):
        Y = np.random.default_rng(2).standard_normal((3, 10))
        copy = Y.copy()
        a, b = privacy.perturb(Y, DEFAULT, 9), privacy.perturb(Y, DEFAULT, 9)
        np.testing.assert_array_equal(a, b)
        np.testing.assert_array_equal(Y, copy)
        assert not np.array_equal(a, privacy.perturb(Y, DEFAULT, 10))

    def test_infinite_epsilon_is_identity(self):
        Y = np.random.default_rng(3).standard_normal((3, 10))
        np.testing.assert_array_equal(privacy.perturb(Y, DpParams(math.inf), 0), Y)

    def test_groups_use_independent_streams(self):
        Y = np.zeros((2, 5))
        a, b = privacy.perturb_groups([Y, Y], DEFAULT, 0)
        assert not np.array_equal(a, b)

    def test_rejects_nan(self):
        with pytest.raises(InvalidArgumentError):
            privacy.perturb(np.array([[np.nan]]), DEFAULT, 0)
