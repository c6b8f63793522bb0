"""Gaussian target with closed-form marginals, used as an oracle."""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from vidiag.models.base import LOG_2PI, Model, _as_batch
from vidiag.vi import MeanFieldGaussian


class AnalyticGaussian(Model):
    """Target ``N(mean, cov)`` plus an optional constant ``log_offset``.

    There is no data; the "prior" is the target itself, so ``sample_prior``
    draws from it and ``simulate_data`` returns an empty dataset.
    """

    name = "analytic_gaussian"

    def __init__(self, mean, cov, log_offset=0.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError("cov shape does not match mean")
        self.mean = mean
        self.cov = cov
        self.log_offset = float(log_offset)
        self._cho = cho_factor(cov, lower=True)
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._cho[0]))))
        K = mean.size
        self.param_names = tuple(f"theta[{i + 1}]" for i in range(K))
        self.constrained_names = self.param_names
        super().__init__({})

    @property
    def marginal_sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov))

    def log_joint(self, zeta):
        z, single = _as_batch(zeta)
        d = z - self.mean
        sol = cho_solve(self._cho, d.T).T
        out = (-0.5 * np.sum(d * sol, axis=1) - 0.5 * self._logdet
               - 0.5 * self.dim * LOG_2PI + self.log_offset)
        return out[0] if single else out

    log_joint_constrained = log_joint

    def grad_log_joint(self, zeta):
        z, single = _as_batch(zeta)
        g = -cho_solve(self._cho, (z - self.mean).T).T
        return g[0] if single else g

    def marginal_log_pdf(self, x, i: int):
        """Exact log density of coordinate ``i``."""
        sd = self.marginal_sd[i]
        zz = (np.asarray(x, dtype=float) - self.mean[i]) / sd
        return -0.5 * zz * zz - math.log(sd) - 0.5 * LOG_2PI

    def exact_posterior(self):
        """The target itself when it is a product of normals, else ``None``."""
        off = self.cov - np.diag(np.diag(self.cov))
        if np.any(off != 0):
            return None
        return MeanFieldGaussian(self.mean, np.log(self.marginal_sd))

    def true_khat(self, q: MeanFieldGaussian) -> float:
        """Closed-form tail shape of the ratio ``p/q`` under ``q``.

        ``E_q (p/q)^a`` is finite iff ``a (A - I) + I`` is positive definite,
        with ``A = Sq^(1/2) Sp^-1 Sq^(1/2)``. The shape is ``1 - min eig(A)``;
        nonpositive values mean bounded ratios.
        """
        sq = np.diag(q.sd)
        A = sq @ np.linalg.inv(self.cov) @ sq
        return float(1.0 - np.linalg.eigvalsh(A).min())

    def sample_prior(self, rng):
        return self.mean + np.linalg.cholesky(self.cov) @ rng.standard_normal(self.dim)

    def simulate_data(self, theta, rng):
        return {}


def analytic_gaussian(mean_p=0.0, sd_p=1.0, corr=None, log_offset=0.0) -> AnalyticGaussian:
    """Gaussian target with per-coordinate means/sds and optional correlation matrix."""
    mean, sd = (a.astype(float) for a in np.broadcast_arrays(np.atleast_1d(mean_p), np.atleast_1d(sd_p)))
    if np.any(sd <= 0):
        raise ValueError("sd_p must be positive")
    R = np.eye(mean.size) if corr is None else np.asarray(corr, dtype=float)
    return AnalyticGaussian(mean, R * np.outer(sd, sd), log_offset=log_offset)
