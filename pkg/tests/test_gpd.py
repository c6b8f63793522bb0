import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, optimize
from scipy.stats import genpareto

from vidiag.errors import DegenerateTailError, DomainError, InsufficientTailError, InvalidParameterError
from vidiag.gpd import (
    K_EPS,
    GpdParams,
    fit_gpd_tail,
    gpd_cdf,
    gpd_log_pdf,
    gpd_pdf,
    gpd_quantile,
    gpd_sample,
    regularize_khat,
)

# 2 * (0.1 ** -0.5 - 1), cross-checked by bisection on the CDF below
Q90_HALF = 4.324555320336758


class TestLogPdf:
    def test_exponential_at_location(self):
        assert gpd_log_pdf(0.0, GpdParams(0.0, 1.0, 0.0)) == 0.0

    def test_unit_shape(self):
        assert gpd_log_pdf(1.0, GpdParams(0.0, 1.0, 1.0)) == pytest.approx(math.log(0.25), abs=1e-15)

    def test_matches_cdf_derivative(self):
        p = GpdParams(0.0, 2.0, 0.5)
        h = 1e-5
        fd = (gpd_cdf(2.0 + h, p) - gpd_cdf(2.0 - h, p)) / (2 * h)
        assert gpd_log_pdf(2.0, p) == pytest.approx(math.log(fd), abs=1e-6)

    @pytest.mark.parametrize("k", [-0.4, -0.1, 0.0, 0.3, 0.7, 1.2])
    def test_agrees_with_scipy(self, k):
        p = GpdParams(0.3, 1.7, k)
        y = np.linspace(0.3, 0.3 + 3.0, 17)
        if k < 0:
            y = y[y < p.upper]
        np.testing.assert_allclose(gpd_log_pdf(y, p), genpareto.logpdf(y, k, 0.3, 1.7), rtol=1e-12, atol=1e-12)

    def test_outside_support_is_minus_inf(self):
        p = GpdParams(0.0, 1.0, -0.5)
        assert gpd_log_pdf(-0.1, p) == -np.inf
        assert gpd_log_pdf(2.5, p) == -np.inf
        assert gpd_log_pdf(-1.0, GpdParams(0.0, 1.0, 0.3)) == -np.inf

    @pytest.mark.parametrize("sigma", [0.0, -1.0, np.nan])
    def test_nonpositive_scale_rejected(self, sigma):
        with pytest.raises(InvalidParameterError):
            GpdParams(0.0, sigma, 0.1)

    def test_continuous_across_branch_switch(self):
        y = np.linspace(0.0, 5.0, 11)
        inner = gpd_log_pdf(y, GpdParams(0.0, 1.0, 0.5 * K_EPS))
        outer = gpd_log_pdf(y, GpdParams(0.0, 1.0, 2.0 * K_EPS))
        np.testing.assert_allclose(inner, outer, atol=1e-12)
        np.testing.assert_allclose(inner, -y, atol=1e-6)


class TestNormalisation:
    @pytest.mark.parametrize("k", [-0.4, 0.0, 0.3, 0.7, 1.2])
    def test_density_integrates_to_one(self, k):
        p = GpdParams(0.0, 1.0, k)
        total, _ = integrate.quad(lambda y: gpd_pdf(y, p), 0.0, p.upper, limit=500)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestQuantile:
    def test_exponential_median(self):
        assert gpd_quantile(0.5, GpdParams(0.0, 1.0, 0.0)) == pytest.approx(math.log(2.0), rel=1e-15)

    def test_closed_form_90th(self):
        p = GpdParams(0.0, 1.0, 0.5)
        assert gpd_quantile(0.9, p) == pytest.approx(Q90_HALF, rel=1e-14)
        root = optimize.brentq(lambda y: gpd_cdf(y, p) - 0.9, 0.0, 100.0, xtol=1e-14)
        assert root == pytest.approx(Q90_HALF, rel=1e-12)

    def test_lower_limit_is_location(self):
        p = GpdParams(2.0, 3.0, 0.8)
        assert gpd_quantile(1e-300, p) == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.2, 1.5, np.nan])
    def test_domain(self, u):
        with pytest.raises(DomainError):
            gpd_quantile(u, GpdParams(0.0, 1.0, 0.2))

    @pytest.mark.parametrize("k", [-0.4, 0.0, 1e-9, 0.3, 0.7, 1.2])
    def test_inverse_of_cdf_on_grid(self, k):
        p = GpdParams(0.0, 1.0, k)
        u = np.linspace(0.01, 0.99, 99)
        np.testing.assert_allclose(gpd_cdf(gpd_quantile(u, p), p), u, rtol=1e-12)

    @given(st.floats(-0.9, 2.0), st.floats(0.01, 100.0), st.floats(0.001, 0.999))
    def test_cdf_monotone_and_inverse(self, k, sigma, u):
        p = GpdParams(0.0, sigma, k)
        y = gpd_quantile(u, p)
        assert gpd_cdf(y, p) == pytest.approx(u, rel=1e-9)
        assert gpd_cdf(y * 1.01 + 1e-12, p) >= gpd_cdf(y, p)


class TestFit:
    def test_scale_equivariance_exact(self, rng):
        x = gpd_sample(GpdParams(0.0, 1.0, 0.3), 200, rng)
        a = fit_gpd_tail(x, 0.0)
        b = fit_gpd_tail(8.0 * x, 0.0)
        assert a.k == b.k
        assert b.sigma == pytest.approx(8.0 * a.sigma, rel=1e-12)

    @pytest.mark.parametrize("c", [1e-3, 0.37, 3.7, 1e4])
    def test_scale_equivariance_arbitrary_factor(self, rng, c):
        x = gpd_sample(GpdParams(0.0, 1.0, 0.3), 200, rng)
        a, b = fit_gpd_tail(x, 0.0), fit_gpd_tail(c * x, 0.0)
        assert b.k == pytest.approx(a.k, abs=1e-13)
        assert b.sigma == pytest.approx(c * a.sigma, rel=1e-12)

    @given(st.integers(-20, 20))
    def test_power_of_two_scaling_leaves_shape(self, e):
        x = gpd_sample(GpdParams(0.0, 1.0, 0.4), 50, np.random.default_rng(3))
        assert fit_gpd_tail(x * 2.0 ** e, 0.0).k == fit_gpd_tail(x, 0.0).k

    @pytest.mark.parametrize("k", [0.0, 0.3, 0.7])
    def test_recovers_shape(self, k):
        est = [fit_gpd_tail(gpd_sample(GpdParams(0.0, 1.0, k), 1000, np.random.default_rng(s)), 0.0).k
               for s in range(50)]
        assert abs(np.median(est) - k) <= 0.05

    def test_exponential_exceedances(self):
        est = [fit_gpd_tail(np.random.default_rng(s).exponential(size=1000), 0.0).k for s in range(50)]
        assert abs(np.median(est)) <= 0.05

    def test_threshold_is_location(self, rng):
        x = gpd_sample(GpdParams(0.0, 1.0, 0.2), 100, rng)
        a, b = fit_gpd_tail(x, 0.0), fit_gpd_tail(x + 5.0, 5.0)
        assert b.mu == 5.0 and b.M == a.M == 100
        assert b.k == pytest.approx(a.k, abs=1e-12)

    def test_regularised_value(self, rng):
        fit = fit_gpd_tail(gpd_sample(GpdParams(0.0, 1.0, 0.2), 40, rng), 0.0)
        assert fit.k_reg == pytest.approx((40 * fit.k + 5.0) / 50.0)
        assert regularize_khat(0.5, 7) == pytest.approx(0.5)

    def test_too_few(self):
        with pytest.raises(InsufficientTailError):
            fit_gpd_tail([1.0, 2.0, 3.0, 4.0], 0.0)

    def test_all_equal(self):
        with pytest.raises(DegenerateTailError):
            fit_gpd_tail(np.full(10, 2.0), 1.0)

    def test_below_threshold(self):
        with pytest.raises(DomainError):
            fit_gpd_tail([0.5, 2.0, 3.0, 4.0, 5.0], 1.0)

    def test_ties_at_threshold_dropped(self, rng):
        x = np.concatenate([[0.0, 0.0], gpd_sample(GpdParams(0.0, 1.0, 0.2), 30, rng)])
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            fit = fit_gpd_tail(x, 0.0)
        assert fit.n_dropped == 2 and fit.M == 30
        assert any("tied" in str(w.message) for w in caught)
