"""Linear, logistic and conjugate-normal models."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, gammaln

from vidiag.models.base import LOG_2PI, Model, _as_batch
from vidiag.vi import MeanFieldGaussian

_CHUNK = 4096


class LinearRegression(Model):
    """``y ~ N(X beta, sigma^2)``, ``beta_i ~ N(0, prior_sd^2)``, ``sigma ~ Gamma(a, rate b)``.

    Unconstrained coordinates are ``beta[1..K]`` and ``log_sigma``. The
    residual sum of squares is evaluated as ``RSS_min + d' X'X d`` with
    ``d = beta - beta_ols``, which avoids cancellation for small sigma.
    """

    name = "linear_regression"

    def __init__(self, X, y, prior_sd=1.0, sigma_prior=(0.5, 0.5)):
        X = np.asarray(X, dtype=float)
        self.K = X.shape[1]
        self.prior_sd = float(prior_sd)
        self.sigma_prior = tuple(float(v) for v in sigma_prior)
        self.param_names = tuple(f"beta[{i + 1}]" for i in range(self.K)) + ("log_sigma",)
        self.constrained_names = tuple(f"beta[{i + 1}]" for i in range(self.K)) + ("sigma",)
        self.log_index = (self.K,)
        super().__init__({"x": X, "y": np.asarray(y, dtype=float)})
        self._on_data()

    def _on_data(self):
        X, y = self.data["x"], self.data["y"]
        self.n = y.size
        self.xtx = X.T @ X
        self.beta_ols = np.linalg.lstsq(X, y, rcond=None)[0]
        r = y - X @ self.beta_ols
        self.rss_min = float(r @ r)

    def _rss(self, beta):
        d = beta - self.beta_ols
        return self.rss_min + np.einsum("bi,ij,bj->b", d, self.xtx, d)

    @property
    def vsbc_margins(self):
        return self.param_names[:min(2, self.K)] + ("log_sigma",)

    def log_joint(self, zeta):
        z, single = _as_batch(zeta)
        beta, s = z[:, :self.K], z[:, self.K]
        a, b = self.sigma_prior
        sigma = np.exp(s)
        ll = -0.5 * self.n * LOG_2PI - self.n * s - self._rss(beta) / (2.0 * sigma * sigma)
        lprior = (-0.5 * np.sum(beta * beta, axis=1) / self.prior_sd ** 2
                  - self.K * (math.log(self.prior_sd) + 0.5 * LOG_2PI))
        lsig = a * math.log(b) - gammaln(a) + (a - 1.0) * s - b * sigma
        out = ll + lprior + lsig + s
        return out[0] if single else out

    def log_joint_constrained(self, theta):
        t, single = _as_batch(theta)
        z = t.copy()
        z[:, self.K] = np.log(t[:, self.K])
        out = self.log_joint(z) - z[:, self.K]
        return out[0] if single else out

    def grad_log_joint(self, zeta):
        z, single = _as_batch(zeta)
        beta, s = z[:, :self.K], z[:, self.K]
        a, b = self.sigma_prior
        inv_var = np.exp(-2.0 * s)
        g = np.empty_like(z)
        g[:, :self.K] = (-(beta - self.beta_ols) @ self.xtx) * inv_var[:, None] - beta / self.prior_sd ** 2
        g[:, self.K] = -self.n + self._rss(beta) * inv_var + a - b * np.exp(s)
        return g[0] if single else g

    def sample_prior(self, rng):
        a, b = self.sigma_prior
        beta = rng.normal(0.0, self.prior_sd, self.K)
        sigma = rng.gamma(a, 1.0 / b)
        # Gamma(0.5, .) puts visible mass near zero; keep sigma representable
        sigma = max(sigma, 1e-8)
        return np.append(beta, sigma)

    def simulate_data(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        X = self.data["x"]
        return {"y": X @ theta[:self.K] + theta[self.K] * rng.standard_normal(self.n)}

    def describe(self):
        return {"name": self.name, "dim": self.dim, "n": self.n, "K": self.K}


def linear_regression(n=1000, K=10, prior_sd=1.0, sigma_prior=(0.5, 0.5), seed=0,
                      beta=None, sigma=2.0) -> LinearRegression:
    """Linear regression with an i.i.d. N(0, 1) design generated from ``seed``.

    The response is simulated from ``beta`` (drawn N(0, 1) when omitted) and
    noise scale ``sigma``.
    """
    if n < 1 or K < 1:
        raise ValueError("n and K must be positive")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, K))
    beta = rng.standard_normal(K) if beta is None else np.asarray(beta, dtype=float)
    y = X @ beta + sigma * rng.standard_normal(n)
    return LinearRegression(X, y, prior_sd=prior_sd, sigma_prior=sigma_prior)


class LogisticRegression(Model):
    """Bernoulli-logit regression without intercept.

    ``prior_sd=None`` gives the flat prior (log prior identically zero). A flat
    prior cannot be sampled, so ``sample_prior`` draws ``beta ~ N(0, 2^2)``;
    calibration runs should build the model with ``prior_sd=2`` so that the
    fitted posterior matches the prior used for simulation.
    """

    name = "logistic_regression"
    SIM_PRIOR_SD = 2.0

    def __init__(self, X, y, prior_sd=None):
        X = np.asarray(X, dtype=float)
        self.K = X.shape[1]
        self.prior_sd = None if prior_sd is None else float(prior_sd)
        self.param_names = tuple(f"beta[{i + 1}]" for i in range(self.K))
        self.constrained_names = self.param_names
        super().__init__({"x": X, "y": np.asarray(y, dtype=float)})
        self._on_data()

    def _on_data(self):
        self.n = self.data["y"].size

    @property
    def vsbc_margins(self):
        return self.param_names[:2]

    def _log_prior(self, beta):
        if self.prior_sd is None:
            return 0.0
        return (-0.5 * np.sum(beta * beta, axis=1) / self.prior_sd ** 2
                - self.K * (math.log(self.prior_sd) + 0.5 * LOG_2PI))

    def log_lik(self, beta):
        b, single = _as_batch(beta)
        X, y = self.data["x"], self.data["y"]
        out = np.empty(b.shape[0])
        for lo in range(0, b.shape[0], _CHUNK):
            eta = b[lo:lo + _CHUNK] @ X.T
            out[lo:lo + _CHUNK] = eta @ y - np.logaddexp(0.0, eta).sum(axis=1)
        return out[0] if single else out

    def log_joint(self, zeta):
        z, single = _as_batch(zeta)
        out = self.log_lik(z) + self._log_prior(z)
        return out[0] if single else out

    log_joint_constrained = log_joint

    def grad_log_joint(self, zeta):
        z, single = _as_batch(zeta)
        X, y = self.data["x"], self.data["y"]
        g = (y - expit(z @ X.T)) @ X
        if self.prior_sd is not None:
            g -= z / self.prior_sd ** 2
        return g[0] if single else g

    def sample_prior(self, rng):
        sd = self.SIM_PRIOR_SD if self.prior_sd is None else self.prior_sd
        return rng.normal(0.0, sd, self.K)

    def simulate_data(self, theta, rng):
        p = expit(self.data["x"] @ np.asarray(theta, dtype=float))
        return {"y": (rng.uniform(size=self.n) < p).astype(float)}

    def describe(self):
        return {"name": self.name, "dim": self.dim, "n": self.n, "K": self.K,
                "prior_sd": self.prior_sd}


def correlated_design(n, K, rho, rng):
    """Rows drawn from ``N(0, (1 - rho) I + rho 11')``."""
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    return math.sqrt(1.0 - rho) * rng.standard_normal((n, K)) + math.sqrt(rho) * rng.standard_normal((n, 1))


def logistic_regression(n=100, K=2, rho=0.0, seed=0, beta=None, prior_sd=None) -> LogisticRegression:
    """Logistic regression on a design with pairwise correlation ``rho``.

    The response is simulated from ``beta``, which defaults to all ones.
    """
    rng = np.random.default_rng(seed)
    X = correlated_design(n, K, rho, rng)
    beta = np.ones(K) if beta is None else np.asarray(beta, dtype=float)
    y = (rng.uniform(size=n) < expit(X @ beta)).astype(float)
    return LogisticRegression(X, y, prior_sd=prior_sd)


class ConjugateGaussian(Model):
    """``theta_j ~ N(0, prior_sd^2)``, ``y_ij ~ N(theta_j, obs_sd^2)`` for ``j = 1..K``.

    The posterior is a product of normals, so it lies inside the mean-field
    family; ``exact_posterior`` returns it.
    """

    name = "conjugate_gaussian"

    def __init__(self, y, prior_sd=1.0, obs_sd=1.0):
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        self.K = y.shape[1]
        self.prior_sd = float(prior_sd)
        self.obs_sd = float(obs_sd)
        self.param_names = tuple(f"theta[{j + 1}]" for j in range(self.K))
        self.constrained_names = self.param_names
        super().__init__({"y": y})
        self._on_data()

    def _on_data(self):
        y = self.data["y"]
        if y.ndim == 1:
            self.data["y"] = y = y[:, None]
        self.n = y.shape[0]
        self.ysum = y.sum(axis=0)
        self.yss = (y * y).sum(axis=0)

    def log_joint(self, zeta):
        z, single = _as_batch(zeta)
        s2 = self.obs_sd ** 2
        ll = -(self.yss - 2.0 * z * self.ysum + self.n * z * z) / (2.0 * s2)
        ll = ll.sum(axis=1) - self.n * self.K * (math.log(self.obs_sd) + 0.5 * LOG_2PI)
        lp = (-0.5 * np.sum(z * z, axis=1) / self.prior_sd ** 2
              - self.K * (math.log(self.prior_sd) + 0.5 * LOG_2PI))
        out = ll + lp
        return out[0] if single else out

    log_joint_constrained = log_joint

    def grad_log_joint(self, zeta):
        z, single = _as_batch(zeta)
        g = (self.ysum - self.n * z) / self.obs_sd ** 2 - z / self.prior_sd ** 2
        return g[0] if single else g

    def posterior_params(self):
        prec = 1.0 / self.prior_sd ** 2 + self.n / self.obs_sd ** 2
        return (self.ysum / self.obs_sd ** 2) / prec, np.full(self.K, 1.0 / math.sqrt(prec))

    def exact_posterior(self):
        mean, sd = self.posterior_params()
        return MeanFieldGaussian(mean, np.log(sd))

    def log_evidence(self) -> float:
        """Closed-form ``log p(y)``."""
        s2, t2, n = self.obs_sd ** 2, self.prior_sd ** 2, self.n
        # y_.j ~ N(0, s2 I + t2 11'); det = s2^(n-1) (s2 + n t2)
        quad = self.yss / s2 - t2 * self.ysum ** 2 / (s2 * (s2 + n * t2))
        logdet = (n - 1) * math.log(s2) + math.log(s2 + n * t2)
        return float(np.sum(-0.5 * quad - 0.5 * logdet - 0.5 * n * LOG_2PI))

    def sample_prior(self, rng):
        return rng.normal(0.0, self.prior_sd, self.K)

    def simulate_data(self, theta, rng):
        return {"y": np.asarray(theta, dtype=float) + self.obs_sd * rng.standard_normal((self.n, self.K))}


def conjugate_gaussian(n=20, K=3, prior_sd=1.0, obs_sd=1.0, seed=0) -> ConjugateGaussian:
    rng = np.random.default_rng(seed)
    theta = rng.normal(0.0, prior_sd, K)
    return ConjugateGaussian(theta + obs_sd * rng.standard_normal((n, K)), prior_sd, obs_sd)
