import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vidiag.errors import DegenerateWeightsError, InvalidDrawsError, TooFewDrawsError
from vidiag.gpd import GpdParams, gpd_sample
from vidiag.psis import (
    Category,
    DrawBatch,
    khat_category,
    khat_to_renyi_order,
    log_ratios,
    psis_diagnose,
    psis_moments,
    psis_smooth,
    snis_estimate,
    tail_count,
)


def normal_logpdf(x, mean=0.0, sd=1.0):
    return -0.5 * ((x - mean) / sd) ** 2 - math.log(sd) - 0.5 * math.log(2 * math.pi)


def gaussian_batch(seed, S, mean_p=0.0, sd_p=1.0):
    x = np.random.default_rng(seed).standard_normal(S)
    return DrawBatch(x, normal_logpdf(x, mean_p, sd_p), normal_logpdf(x))


log_ratio_vectors = arrays(np.float64, st.integers(25, 400),
                           elements=st.floats(-30.0, 30.0, allow_nan=False, allow_infinity=False))


class TestTailCount:
    @pytest.mark.parametrize("S, M", [(25, 5), (100, 20), (1000, 95), (10_000, 300), (100_000, 949)])
    def test_values(self, S, M):
        assert tail_count(S) == M

    @given(st.integers(25, 10**7))
    def test_at_least_five(self, S):
        assert 5 <= tail_count(S) <= S // 5


class TestLogRatios:
    def test_identity_proposal(self):
        lp = np.random.default_rng(1).normal(size=50)
        np.testing.assert_array_equal(log_ratios(DrawBatch(None, lp, lp)), np.zeros(50))

    def test_hand_evaluated(self):
        x = np.array([0.0, 0.5, 1.0])
        b = DrawBatch(x, normal_logpdf(x, 0.5), normal_logpdf(x))
        # 0.5 x - 0.125 at the draws, shifted so that the maximum is zero
        np.testing.assert_allclose(log_ratios(b), [-0.5, -0.25, 0.0], atol=1e-15)


class TestDrawBatch:
    def test_non_finite_reports_indices(self):
        lp = np.zeros(30)
        lp[[3, 17]] = [np.nan, np.inf]
        with pytest.raises(InvalidDrawsError) as err:
            DrawBatch(None, lp, np.zeros(30))
        assert err.value.indices == (3, 17)

    def test_non_finite_draw_row(self):
        d = np.zeros((30, 2))
        d[5, 1] = np.nan
        with pytest.raises(InvalidDrawsError) as err:
            DrawBatch(d, np.zeros(30), np.zeros(30))
        assert err.value.indices == (5,)

    def test_length_mismatch(self):
        with pytest.raises(InvalidDrawsError):
            DrawBatch(None, np.zeros(30), np.zeros(31))

    def test_too_few_draws(self):
        with pytest.raises(TooFewDrawsError):
            psis_smooth(np.zeros(24) - np.arange(24))


class TestSmoothing:
    def test_constant_ratios(self):
        w = psis_smooth(np.full(100, 3.0))
        assert w.constant_ratios and w.khat is None and w.category is Category.GOOD
        np.testing.assert_array_equal(w.weights, np.ones(100))

    def test_gpd_exceedances(self):
        est = [psis_smooth(np.log(gpd_sample(GpdParams(1.0, 1.0, 0.3), 10_000, np.random.default_rng(s))),
                           regularize=False).khat_raw for s in range(50)]
        assert abs(np.median(est) - 0.3) <= 0.05

    def test_gaussian_scale_mismatch(self):
        est = [psis_diagnose(gaussian_batch(s, 100_000, sd_p=math.sqrt(2.0))).khat for s in range(20)]
        assert abs(np.median(est) - 0.5) <= 0.1

    def test_fit_failure_is_bad(self):
        lr = np.concatenate([np.zeros(30), np.full(70, -1.0)])
        w = psis_smooth(lr)
        assert w.fit_failed and w.category is Category.BAD and w.khat is None
        np.testing.assert_array_equal(w.log_weights, lr)

    def test_unregularised_category_uses_raw(self):
        w = psis_smooth(np.random.default_rng(0).normal(size=200), regularize=False)
        assert w.khat == w.khat_raw
        assert w.category is khat_category(w.khat_raw)

    @given(log_ratio_vectors)
    def test_truncated_at_raw_maximum(self, lr):
        w = psis_smooth(lr)
        assert np.all(w.log_weights <= 0.0)
        assert np.all(w.weights <= math.exp(0.0))

    @given(log_ratio_vectors)
    def test_non_tail_weights_are_raw(self, lr):
        w = psis_smooth(lr)
        body = np.setdiff1d(np.arange(lr.size), w.tail_index)
        np.testing.assert_array_equal(w.log_weights[body], (lr - lr.max())[body])

    @given(log_ratio_vectors)
    def test_tail_weights_monotone_in_ratio(self, lr):
        w = psis_smooth(lr)
        raw = (lr - lr.max())[w.tail_index]
        lw = w.log_weights[w.tail_index]
        order = np.argsort(raw, kind="stable")
        raw, lw = raw[order], lw[order]
        assert np.all(np.diff(lw) >= 0)
        tied = np.diff(raw) == 0
        np.testing.assert_array_equal(lw[1:][tied], lw[:-1][tied])

    @given(log_ratio_vectors, st.sampled_from([-100.0, 100.0]))
    def test_shift_invariance(self, lr, c):
        a, b = psis_smooth(lr), psis_smooth(lr + c)
        assert a.category is b.category
        if a.khat is not None:
            assert b.khat == pytest.approx(a.khat, abs=1e-10)
        h = np.linspace(-1.0, 1.0, lr.size)
        assert snis_estimate(h, b) == pytest.approx(snis_estimate(h, a), abs=1e-10)


class TestCategory:
    @pytest.mark.parametrize("khat, cat", [
        (0.3, Category.GOOD), (0.64, Category.OK), (9.8, Category.BAD),
        (0.4999999, Category.GOOD), (0.5, Category.OK), (0.7, Category.OK), (0.7000001, Category.BAD),
        (-0.2, Category.GOOD),
    ])
    def test_thresholds(self, khat, cat):
        assert khat_category(khat) is cat

    def test_labels(self):
        assert [c.value for c in Category] == ["Good", "Ok", "Bad"]


class TestRenyiOrder:
    @pytest.mark.parametrize("khat, order", [(0.5, 2.0), (1.0, 1.0), (0.25, 4.0)])
    def test_reciprocal(self, khat, order):
        assert khat_to_renyi_order(khat) == order

    @pytest.mark.parametrize("khat", [0.0, -0.3])
    def test_bounded_ratios(self, khat):
        assert khat_to_renyi_order(khat) == math.inf

    def test_non_finite(self):
        with pytest.raises(ValueError):
            khat_to_renyi_order(float("nan"))


class TestSnis:
    @given(log_ratio_vectors)
    def test_constant_function_is_exactly_one(self, lr):
        assert snis_estimate(np.ones(lr.size), psis_smooth(lr)) == 1.0

    def test_unit_weights_give_sample_mean(self, rng):
        h = rng.normal(size=500)
        assert snis_estimate(h, np.ones(500)) == pytest.approx(h.mean(), rel=1e-14)

    def test_mean_shift_target(self):
        est = []
        for s in range(20):
            b = gaussian_batch(s, 100_000, mean_p=0.5)
            est.append(snis_estimate(b.draws[:, 0], psis_diagnose(b)))
        assert abs(np.median(est) - 0.5) <= 0.02

    def test_zero_weights(self):
        with pytest.raises(DegenerateWeightsError):
            snis_estimate(np.ones(3), np.zeros(3))

    def test_matrix_h(self, rng):
        h = rng.normal(size=(100, 3))
        np.testing.assert_allclose(snis_estimate(h, np.ones(100)), h.mean(axis=0), rtol=1e-13)


class TestMoments:
    def test_exact_proposal(self):
        b = gaussian_batch(4, 100_000)
        m1, m2 = psis_moments(b, psis_diagnose(b))
        assert abs(m1[0]) < 4 / math.sqrt(100_000)
        assert abs(m2[0] - 1.0) < 4 * math.sqrt(2 / 100_000)

    def test_unit_weights(self, rng):
        d = rng.normal(size=(60, 2))
        b = DrawBatch(d, np.zeros(60), np.zeros(60))
        m1, m2 = psis_moments(b, np.ones(60))
        np.testing.assert_allclose(m1, d.mean(axis=0), rtol=1e-13)
        np.testing.assert_allclose(m2, (d ** 2).mean(axis=0), rtol=1e-13)

    def test_wider_target_second_moment(self):
        est = []
        for s in range(20):
            b = gaussian_batch(s, 100_000, sd_p=math.sqrt(2.0))
            est.append(psis_moments(b, psis_diagnose(b))[1][0])
        assert abs(np.median(est) - 2.0) <= 0.1

    def test_needs_draws(self):
        b = DrawBatch(None, np.zeros(30), np.zeros(30))
        with pytest.raises(ValueError):
            psis_moments(b, np.ones(30))
