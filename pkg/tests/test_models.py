import math

import numpy as np
import pytest
from scipy import integrate

from vidiag.models import (
    MODELS,
    analytic_gaussian,
    build_model,
    conjugate_gaussian,
    data_from_csv,
    data_to_csv,
    default_tau0,
    eight_schools,
    linear_regression,
    logistic_regression,
    regularized_horseshoe_logistic,
)
from vidiag.models.regression import correlated_design
from vidiag.models.schools import SCHOOLS_SIGMA, SCHOOLS_Y
from vidiag.reference import metropolis_chains, pool_chains

MODEL_FACTORIES = {
    "linear": lambda: linear_regression(n=50, K=3, seed=1),
    "logistic_flat": lambda: logistic_regression(n=50, K=3, rho=0.5, seed=2),
    "logistic_prior": lambda: logistic_regression(n=50, K=3, rho=0.5, seed=2, prior_sd=2.0),
    "schools_centered": lambda: eight_schools("centered"),
    "schools_noncentered": lambda: eight_schools("noncentered"),
    "horseshoe_small": lambda: regularized_horseshoe_logistic(n=30, D=20, seed=3),
    "horseshoe": lambda: regularized_horseshoe_logistic(),
    "conjugate": lambda: conjugate_gaussian(n=10, K=3, seed=4),
    "analytic": lambda: analytic_gaussian([1.0, -1.0], [2.0, 0.5], corr=[[1.0, -0.4], [-0.4, 1.0]]),
}


@pytest.fixture(params=sorted(MODEL_FACTORIES))
def model(request):
    return MODEL_FACTORIES[request.param]()


def five_point_gradient(f, z, h=1e-4):
    """Fourth-order central differences of ``f`` at ``z``, one batch per point."""
    K = z.size
    E = np.eye(K) * h
    pts = np.concatenate([z + 2 * E, z + E, z - E, z - 2 * E])
    v = f(pts).reshape(4, K)
    return (-v[0] + 8 * v[1] - 8 * v[2] + v[3]) / (12 * h)


class TestContract:
    def test_gradient_matches_finite_differences(self, model):
        rng = np.random.default_rng(17)
        for _ in range(20):
            z = rng.normal(0.0, 1.0, model.dim)
            g = model.grad_log_joint(z)
            fd = five_point_gradient(model.log_joint, z)
            assert np.max(np.abs(fd - g)) <= 1e-5 * max(np.max(np.abs(g)), 1.0)

    def test_batch_and_single_agree(self, model, rng):
        z = rng.normal(size=(4, model.dim))
        np.testing.assert_allclose(model.log_joint(z), [model.log_joint(r) for r in z], rtol=1e-13)
        np.testing.assert_allclose(model.grad_log_joint(z), [model.grad_log_joint(r) for r in z],
                                   rtol=1e-12, atol=1e-12)

    def test_transform_round_trip(self, model):
        rng = np.random.default_rng(5)
        for _ in range(20):
            theta = model.sample_prior(rng)
            back = model.to_constrained(model.to_unconstrained(theta))
            np.testing.assert_allclose(back, theta, rtol=1e-10, atol=1e-12)
            z = rng.normal(size=model.dim)
            np.testing.assert_allclose(model.to_unconstrained(model.to_constrained(z)), z, rtol=1e-10, atol=1e-10)

    def test_log_joint_includes_jacobian(self, model, rng):
        z = rng.normal(size=(5, model.dim))
        expected = model.log_joint_constrained(model.to_constrained(z)) + model.log_abs_det_jacobian(z)
        np.testing.assert_allclose(model.log_joint(z), expected, rtol=1e-10)

    def test_finite_at_generating_parameters(self, model):
        rng = np.random.default_rng(6)
        for _ in range(100):
            theta = model.sample_prior(rng)
            fitted = model.condition(model.simulate_data(theta, rng))
            assert np.isfinite(fitted.log_joint(fitted.to_unconstrained(theta)))

    def test_names(self, model):
        assert len(model.param_names) == model.dim == len(model.constrained_names)
        assert set(model.vsbc_margins) <= set(model.param_names) | set(model.constrained_names)


class TestJacobian:
    @staticmethod
    def slice_integrals(model, base_theta, coord):
        """Integral of the constrained density along ``coord`` and of the
        unconstrained density along its log."""
        ref = model.log_joint_constrained(base_theta)

        def constrained(t):
            th = base_theta.copy()
            th[coord] = t
            return math.exp(model.log_joint_constrained(th) - ref)

        def unconstrained(s):
            z = model.to_unconstrained(base_theta)
            z[coord] = s
            return math.exp(model.log_joint(z) - ref)

        t0 = base_theta[coord]
        edges = [0.0, t0 / 100.0, 100.0 * t0, np.inf]
        a = sum(integrate.quad(constrained, lo, hi, limit=400)[0] for lo, hi in zip(edges, edges[1:]))
        s0 = math.log(t0)
        b, _ = integrate.quad(unconstrained, s0 - 40.0, s0 + 40.0, limit=400, points=[s0])
        return a, b

    def test_schools_tau(self):
        model = eight_schools("centered")
        theta = np.concatenate([SCHOOLS_Y * 0.3, [4.0, 3.0]])
        a, b = self.slice_integrals(model, theta, 9)
        assert b == pytest.approx(a, rel=1e-5)

    def test_linear_sigma(self):
        model = linear_regression(n=30, K=2, seed=7)
        theta = np.append(model.beta_ols, 2.0)
        a, b = self.slice_integrals(model, theta, 2)
        assert b == pytest.approx(a, rel=1e-5)


class TestLinearRegression:
    def test_posterior_mean_near_truth(self):
        model = linear_regression(n=20_000, K=1, seed=8, beta=[2.0], sigma=1.0)
        chains = metropolis_chains(model, 4000, n_chains=4, rng=np.random.default_rng(8))
        beta = pool_chains(chains)[:, 0]
        # posterior sd is about sigma / sqrt(n) = 0.007
        assert abs(beta.mean() - 2.0) < 0.03

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            linear_regression(n=0, K=2)


class TestLogisticRegression:
    def test_zero_coefficients_half_likelihood(self):
        model = logistic_regression(n=40, K=3, seed=1)
        assert model.log_lik(np.zeros(3)) == pytest.approx(40 * math.log(0.5), rel=1e-14)
        assert model.log_joint(np.zeros(3)) == pytest.approx(40 * math.log(0.5), rel=1e-14)

    def test_design_correlation(self):
        X = correlated_design(200_000, 2, 0.9, np.random.default_rng(2))
        assert np.corrcoef(X.T)[0, 1] == pytest.approx(0.9, abs=0.005)
        np.testing.assert_allclose(X.var(axis=0), 1.0, atol=0.02)

    def test_prior_sampler_is_proper(self):
        model = logistic_regression(n=10, K=2)
        draws = np.array([model.sample_prior(np.random.default_rng(s)) for s in range(4000)])
        assert draws.std() == pytest.approx(2.0, rel=0.05)


class TestEightSchools:
    def test_data(self):
        np.testing.assert_array_equal(SCHOOLS_Y, [28, 8, -3, 7, -1, 1, 8, 12])
        np.testing.assert_array_equal(SCHOOLS_SIGMA, [15, 10, 16, 11, 9, 11, 10, 18])

    def test_parametrizations_share_constrained_density(self, rng):
        c, nc = eight_schools("centered"), eight_schools("noncentered")
        assert c.constrained_names == nc.constrained_names
        theta = c.sample_prior(rng)
        zc, znc = c.to_unconstrained(theta), nc.to_unconstrained(theta)
        assert c.log_joint(zc) - c.log_abs_det_jacobian(zc) == pytest.approx(
            nc.log_joint(znc) - nc.log_abs_det_jacobian(znc), rel=1e-10)

    def test_unknown_parametrization(self):
        with pytest.raises(ValueError):
            eight_schools("sideways")


class TestHorseshoe:
    def test_default_global_scale(self):
        assert default_tau0(70, 100) == pytest.approx(2.0 / (math.sqrt(70) * 99))
        assert regularized_horseshoe_logistic().tau0 == pytest.approx(default_tau0(70, 100))

    def test_desk_scale_limit(self):
        with pytest.raises(ValueError):
            regularized_horseshoe_logistic(n=70, D=500)

    def test_dimension(self):
        assert regularized_horseshoe_logistic(n=30, D=20).dim == 2 * 20 + 3


class TestAnalyticGaussian:
    @pytest.mark.parametrize("ratio, k", [(1.0, 0.0), (2.0, 0.5), (4.0, 0.75)])
    def test_true_khat(self, ratio, k):
        from vidiag.vi import MeanFieldGaussian
        model = analytic_gaussian(0.0, math.sqrt(ratio))
        assert model.true_khat(MeanFieldGaussian.standard(1)) == pytest.approx(k)

    def test_rejects_nonpositive_sd(self):
        with pytest.raises(ValueError):
            analytic_gaussian(0.0, 0.0)


class TestRegistry:
    @pytest.mark.parametrize("name", sorted(MODELS))
    def test_build(self, name):
        kwargs = {"n": 20, "D": 10} if name == "horseshoe" else {}
        assert build_model(name, **kwargs).dim >= 1

    def test_unknown(self):
        with pytest.raises(ValueError):
            build_model("nope")


def test_data_csv_round_trip(tmp_path):
    model = linear_regression(n=12, K=3, seed=9)
    path = tmp_path / "data.csv"
    data_to_csv(model.data, path)
    back = data_from_csv(path)
    np.testing.assert_array_equal(back["x"], model.data["x"])
    np.testing.assert_array_equal(back["y"], model.data["y"])
