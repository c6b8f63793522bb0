"""Eight-schools hierarchical normal model, centered and non-centered.

Both parametrizations target the same posterior over the constrained
parameters ``(theta[1..8], mu, tau)`` and report under those names; they
differ only in the unconstrained coordinates handed to the optimiser.
"""
from __future__ import annotations

import math

import numpy as np

from vidiag.models.base import LOG_2PI, Model, _as_batch, half_cauchy_logpdf

SCHOOLS_Y = np.array([28.0, 8.0, -3.0, 7.0, -1.0, 1.0, 8.0, 12.0])
SCHOOLS_SIGMA = np.array([15.0, 10.0, 16.0, 11.0, 9.0, 11.0, 10.0, 18.0])
MU_SD = 5.0
TAU_SCALE = 5.0
J = 8


class EightSchools(Model):
    name = "eight_schools"
    constrained_names = tuple(f"theta[{j + 1}]" for j in range(J)) + ("mu", "tau")
    vsbc_margins = ("theta[1]", "mu", "log_tau")

    def __init__(self, y=SCHOOLS_Y, sigma=SCHOOLS_SIGMA):
        super().__init__({"y": np.asarray(y, dtype=float), "sigma": np.asarray(sigma, dtype=float)})

    def log_joint_constrained(self, theta):
        t, single = _as_batch(theta)
        th, mu, tau = t[:, :J], t[:, J], t[:, J + 1]
        y, s = self.data["y"], self.data["sigma"]
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = -0.5 * np.sum(((y - th) / s) ** 2, axis=1) - np.sum(np.log(s)) - 0.5 * J * LOG_2PI
            zt = (th - mu[:, None]) / tau[:, None]
            lth = -0.5 * np.sum(zt * zt, axis=1) - J * np.log(tau) - 0.5 * J * LOG_2PI
            lmu = -0.5 * (mu / MU_SD) ** 2 - math.log(MU_SD) - 0.5 * LOG_2PI
            ltau = np.where(tau > 0, half_cauchy_logpdf(tau, TAU_SCALE), -np.inf)
        out = ll + lth + lmu + ltau
        return out[0] if single else out

    @staticmethod
    def _dltau_prior(tau):
        r = (tau / TAU_SCALE) ** 2
        return -2.0 * r / (1.0 + r)  # d/dlog(tau) of the half-Cauchy log density

    def sample_prior(self, rng):
        mu = rng.normal(0.0, MU_SD)
        tau = abs(TAU_SCALE * rng.standard_cauchy())
        theta = rng.normal(mu, tau, J)
        return np.concatenate([theta, [mu, tau]])

    def simulate_data(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        return {"y": theta[:J] + self.data["sigma"] * rng.standard_normal(J)}


class EightSchoolsCentered(EightSchools):
    name = "eight_schools_centered"
    param_names = tuple(f"theta[{j + 1}]" for j in range(J)) + ("mu", "log_tau")
    log_index = (J + 1,)

    def grad_log_joint(self, zeta):
        z, single = _as_batch(zeta)
        th, mu, lt = z[:, :J], z[:, J], z[:, J + 1]
        y, s = self.data["y"], self.data["sigma"]
        inv_t2 = np.exp(-2.0 * lt)
        dev = th - mu[:, None]
        g = np.empty_like(z)
        g[:, :J] = (y - th) / s ** 2 - dev * inv_t2[:, None]
        g[:, J] = dev.sum(axis=1) * inv_t2 - mu / MU_SD ** 2
        g[:, J + 1] = -J + np.sum(dev * dev, axis=1) * inv_t2 + self._dltau_prior(np.exp(lt)) + 1.0
        return g[0] if single else g


class EightSchoolsNonCentered(EightSchools):
    """Unconstrained coordinates ``(theta_raw[1..8], mu, log_tau)`` with
    ``theta = mu + tau * theta_raw``."""

    name = "eight_schools_noncentered"
    param_names = tuple(f"theta_raw[{j + 1}]" for j in range(J)) + ("mu", "log_tau")

    @property
    def monotone_map(self):
        return {"mu": J, "tau": J + 1}

    def to_constrained(self, zeta):
        z = np.array(zeta, dtype=float)
        tau = np.exp(z[..., J + 1])
        z[..., :J] = z[..., J, None] + tau[..., None] * z[..., :J]
        z[..., J + 1] = tau
        return z

    def to_unconstrained(self, theta):
        t = np.array(theta, dtype=float)
        tau = t[..., J + 1]
        t[..., :J] = (t[..., :J] - t[..., J, None]) / tau[..., None]
        t[..., J + 1] = np.log(tau)
        return t

    def log_abs_det_jacobian(self, zeta):
        z = np.asarray(zeta, dtype=float)
        return (J + 1) * z[..., J + 1]

    def log_joint(self, zeta):
        z, single = _as_batch(zeta)
        raw, mu, lt = z[:, :J], z[:, J], z[:, J + 1]
        tau = np.exp(lt)
        y, s = self.data["y"], self.data["sigma"]
        th = mu[:, None] + tau[:, None] * raw
        out = (-0.5 * np.sum(((y - th) / s) ** 2, axis=1) - np.sum(np.log(s)) - 0.5 * J * LOG_2PI
               - 0.5 * np.sum(raw * raw, axis=1) - 0.5 * J * LOG_2PI
               - 0.5 * (mu / MU_SD) ** 2 - math.log(MU_SD) - 0.5 * LOG_2PI
               + half_cauchy_logpdf(tau, TAU_SCALE) + lt)
        return out[0] if single else out

    def grad_log_joint(self, zeta):
        z, single = _as_batch(zeta)
        raw, mu, lt = z[:, :J], z[:, J], z[:, J + 1]
        tau = np.exp(lt)
        y, s = self.data["y"], self.data["sigma"]
        r = (y - (mu[:, None] + tau[:, None] * raw)) / s ** 2
        g = np.empty_like(z)
        g[:, :J] = tau[:, None] * r - raw
        g[:, J] = r.sum(axis=1) - mu / MU_SD ** 2
        g[:, J + 1] = tau * np.sum(r * raw, axis=1) + self._dltau_prior(tau) + 1.0
        return g[0] if single else g


def eight_schools(parametrization: str = "centered") -> EightSchools:
    key = parametrization.lower().replace("-", "").replace("_", "")
    if key == "centered":
        return EightSchoolsCentered()
    if key == "noncentered":
        return EightSchoolsNonCentered()
    raise ValueError(f"unknown parametrization {parametrization!r}")
