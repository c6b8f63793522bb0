"""Logistic regression with a regularized horseshoe prior.

    y ~ Bernoulli(logit^-1(beta0 + X beta)),  beta_j = z_j * tau * lambda_tilde_j
    z_j ~ N(0, 1),  lambda_j ~ C+(0, 1),  tau ~ C+(0, tau0)
    caux ~ Inv-Gamma(nu/2, nu/2),  c = slab_scale * sqrt(caux)
    lambda_tilde_j^2 = c^2 lambda_j^2 / (c^2 + tau^2 lambda_j^2)
    beta0 ~ N(0, 10)

With ``slab_scale = 2`` and ``nu = 4`` this gives ``c^2 ~ Inv-Gamma(2, 8)``.
Positive parameters are unconstrained on the log scale.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, gammaln

from vidiag.models.base import LOG_2PI, Model, _as_batch

_CHUNK = 2048


def default_tau0(n: int, D: int) -> float:
    """Global scale ``2 / (sqrt(n) (D - 1))``."""
    return 2.0 / (math.sqrt(n) * (D - 1))


class RegularizedHorseshoeLogistic(Model):
    name = "horseshoe"
    vsbc_margins = ("log_tau", "log_lambda[1]")

    def __init__(self, X, y, tau0=None, slab_scale=2.0, slab_df=4.0, intercept_sd=10.0):
        X = np.asarray(X, dtype=float)
        n, D = X.shape
        self.D = D
        self.tau0 = default_tau0(n, D) if tau0 in (None, "auto") else float(tau0)
        self.slab_scale = float(slab_scale)
        self.slab_df = float(slab_df)
        self.intercept_sd = float(intercept_sd)
        idx = [str(j + 1) for j in range(D)]
        self.param_names = (("beta0",) + tuple(f"z[{j}]" for j in idx)
                            + tuple(f"log_lambda[{j}]" for j in idx) + ("log_tau", "log_caux"))
        self.constrained_names = (("beta0",) + tuple(f"z[{j}]" for j in idx)
                                  + tuple(f"lambda[{j}]" for j in idx) + ("tau", "caux"))
        self.log_index = tuple(range(D + 1, 2 * D + 3))
        super().__init__({"x": X, "y": np.asarray(y, dtype=float)})
        self._on_data()

    def _on_data(self):
        self.n = self.data["y"].size

    def _split(self, z):
        D = self.D
        return z[:, 0], z[:, 1:D + 1], z[:, D + 1:2 * D + 1], z[:, 2 * D + 1], z[:, 2 * D + 2]

    def _pieces(self, z):
        b0, zz, u, t, a = self._split(z)
        log_c2 = 2.0 * math.log(self.slab_scale) + a
        # r = c^2 / (c^2 + tau^2 lambda^2)
        r = expit(log_c2[:, None] - 2.0 * (t[:, None] + u))
        with np.errstate(over="ignore", invalid="ignore"):
            scale = np.exp(t[:, None] + u) * np.sqrt(r)  # tau * lambda_tilde
        return b0, zz, u, t, a, r, scale

    def coefficients(self, zeta):
        """Regression coefficients ``beta`` implied by unconstrained draws."""
        z, single = _as_batch(zeta)
        _, zz, *_, scale = self._pieces(z)
        beta = zz * scale
        return beta[0] if single else beta

    def _log_prior(self, z):
        b0, zz, u, t, a = self._split(z)
        alpha = beta_ig = 0.5 * self.slab_df
        lz = -0.5 * np.sum(zz * zz, axis=1) - 0.5 * self.D * LOG_2PI
        with np.errstate(over="ignore"):
            llam = np.sum(math.log(2.0 / math.pi) - np.log1p(np.exp(2.0 * u)) + u, axis=1)
            ltau = (math.log(2.0 / (math.pi * self.tau0)) - np.log1p(np.exp(2.0 * t) / self.tau0 ** 2) + t)
            lcaux = (alpha * math.log(beta_ig) - gammaln(alpha) - (alpha + 1.0) * a
                     - beta_ig * np.exp(-a) + a)
        lb0 = -0.5 * (b0 / self.intercept_sd) ** 2 - math.log(self.intercept_sd) - 0.5 * LOG_2PI
        return lz + llam + ltau + lcaux + lb0

    def log_joint(self, zeta):
        z, single = _as_batch(zeta)
        X, y = self.data["x"], self.data["y"]
        out = np.empty(z.shape[0])
        for lo in range(0, z.shape[0], _CHUNK):
            zc = z[lo:lo + _CHUNK]
            b0, zz, *_, scale = self._pieces(zc)
            f = b0[:, None] + (zz * scale) @ X.T
            out[lo:lo + _CHUNK] = f @ y - np.logaddexp(0.0, f).sum(axis=1) + self._log_prior(zc)
        return out[0] if single else out

    def log_joint_constrained(self, theta):
        t, single = _as_batch(theta)
        z = self.to_unconstrained(t)
        out = self.log_joint(z) - self.log_abs_det_jacobian(z)
        return out[0] if single else out

    def grad_log_joint(self, zeta):
        z, single = _as_batch(zeta)
        D = self.D
        X, y = self.data["x"], self.data["y"]
        b0, zz, u, t, a, r, scale = self._pieces(z)
        beta = zz * scale
        e = y - expit(b0[:, None] + beta @ X.T)
        gb = e @ X
        gbr = gb * beta * r
        with np.errstate(over="ignore", invalid="ignore"):
            lam2 = np.exp(2.0 * u)
            dlam = np.where(np.isinf(lam2), -1.0, 1.0 - 2.0 * lam2 / (1.0 + lam2))
            tt = np.exp(2.0 * t) / self.tau0 ** 2
            dtau = np.where(np.isinf(tt), -1.0, 1.0 - 2.0 * tt / (1.0 + tt))
        half_df = 0.5 * self.slab_df
        g = np.empty_like(z)
        g[:, 0] = e.sum(axis=1) - b0 / self.intercept_sd ** 2
        g[:, 1:D + 1] = gb * scale - zz
        g[:, D + 1:2 * D + 1] = gbr + dlam
        g[:, 2 * D + 1] = gbr.sum(axis=1) + dtau
        g[:, 2 * D + 2] = 0.5 * np.sum(gb * beta * (1.0 - r), axis=1) - half_df + half_df * np.exp(-a)
        return g[0] if single else g

    def sample_prior(self, rng):
        D = self.D
        half_df = 0.5 * self.slab_df
        return np.concatenate([
            [rng.normal(0.0, self.intercept_sd)],
            rng.standard_normal(D),
            np.abs(rng.standard_cauchy(D)),
            [abs(self.tau0 * rng.standard_cauchy()), 1.0 / rng.gamma(half_df, 1.0 / half_df)],
        ])

    def simulate_data(self, theta, rng):
        zeta = self.to_unconstrained(np.asarray(theta, dtype=float))
        beta = self.coefficients(zeta)
        p = expit(zeta[0] + self.data["x"] @ beta)
        return {"y": (rng.uniform(size=self.n) < p).astype(float)}

    def describe(self):
        return {"name": self.name, "dim": self.dim, "n": self.n, "D": self.D, "tau0": self.tau0}


def regularized_horseshoe_logistic(n=70, D=100, tau0="auto", seed=0, n_signal=3,
                                   signal=3.0) -> RegularizedHorseshoeLogistic:
    """Synthetic sparse problem: standardised N(0, 1) design, the first
    ``n_signal`` coefficients equal to ``+-signal`` (alternating) and the rest 0.
    """
    if D > 200 or n > 200:
        raise ValueError("desk-scale horseshoe problems are limited to n, D <= 200")
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, D))
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    beta = np.zeros(D)
    beta[:n_signal] = signal * np.where(np.arange(n_signal) % 2 == 0, 1.0, -1.0)
    y = (rng.uniform(size=n) < expit(X @ beta)).astype(float)
    return RegularizedHorseshoeLogistic(X, y, tau0=tau0)
