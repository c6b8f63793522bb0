"""Generalized Pareto distribution and tail-shape estimation.

Parametrisation: location ``mu``, scale ``sigma > 0`` and shape ``k``. With
``z = (y - mu) / sigma`` the density is ``(1 + k z) ** (-1/k - 1) / sigma``,
and ``exp(-z) / sigma`` in the ``k = 0`` limit. For ``k < 0`` the support is
``[mu, mu - sigma / k]``, otherwise ``[mu, inf)``.

Shapes with ``|k| < K_EPS`` are evaluated with a first-order expansion around
``k = 0`` to avoid cancellation in ``log1p(k z) / k``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from vidiag import _backend
from vidiag.errors import (
    DegenerateTailError,
    DomainError,
    InsufficientTailError,
    InvalidParameterError,
)

K_EPS = 1e-8
MIN_TAIL = 5

# Zhang & Stephens grid settings, as used by the PSIS reference code.
_GRID_BASE = 30
_PRIOR_BS = 3.0
# Shrinkage of the shape towards 0.5 with the weight of 10 pseudo-observations.
_REG_PSEUDO_N = 10.0
_REG_TARGET = 0.5


@dataclass(frozen=True)
class GpdParams:
    mu: float
    sigma: float
    k: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidParameterError(f"sigma must be positive, got {self.sigma!r}")
        if not np.isfinite(self.k) or not np.isfinite(self.mu):
            raise InvalidParameterError("mu and k must be finite")

    @property
    def upper(self) -> float:
        """Upper end of the support (``inf`` unless ``k < 0``)."""
        return self.mu - self.sigma / self.k if self.k < 0 else np.inf


@dataclass(frozen=True)
class ParetoFit:
    """Result of fitting a GPD to threshold exceedances.

    ``k`` is the raw shape estimate, ``k_reg`` the estimate shrunk towards
    0.5, ``mu`` the threshold and ``M`` the number of exceedances used.
    ``n_dropped`` counts exceedances equal to zero (ties at the threshold).
    """

    k: float
    sigma: float
    mu: float
    M: int
    k_reg: float
    n_dropped: int = 0

    def params(self, regularized: bool = False) -> GpdParams:
        return GpdParams(self.mu, self.sigma, self.k_reg if regularized else self.k)


def _check(params: GpdParams) -> GpdParams:
    if not isinstance(params, GpdParams):
        params = GpdParams(*params)
    return params


def gpd_log_pdf(y, params: GpdParams):
    """Log density. Points outside the support give ``-inf``."""
    p = _check(params)
    y = np.asarray(y, dtype=float)
    z = (y - p.mu) / p.sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        if abs(p.k) < K_EPS:
            out = -np.log(p.sigma) - z - p.k * (z - 0.5 * z * z)
            inside = z >= 0
        else:
            t = np.log1p(p.k * z)
            out = -np.log(p.sigma) - (1.0 / p.k + 1.0) * t
            inside = (z >= 0) & (1.0 + p.k * z >= 0)
    out = np.where(inside, out, -np.inf)
    return out if out.ndim else float(out)


def gpd_pdf(y, params: GpdParams):
    return np.exp(gpd_log_pdf(y, params))


def gpd_cdf(y, params: GpdParams):
    p = _check(params)
    y = np.asarray(y, dtype=float)
    z = np.maximum((y - p.mu) / p.sigma, 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if abs(p.k) < K_EPS:
            out = -np.expm1(-(z - 0.5 * p.k * z * z))
        else:
            base = 1.0 + p.k * z
            out = np.where(base > 0, -np.expm1(-np.log1p(p.k * z) / p.k), 1.0)
    return out if np.ndim(out) else float(out)


def gpd_quantile(u, params: GpdParams):
    """Inverse CDF for ``0 < u < 1``."""
    p = _check(params)
    u = np.asarray(u, dtype=float)
    if np.any(~((u > 0) & (u < 1))):
        raise DomainError("quantile level must lie in the open interval (0, 1)")
    ell = -np.log1p(-u)
    with np.errstate(over="ignore"):
        if abs(p.k) < K_EPS:
            out = p.mu + p.sigma * (ell + 0.5 * p.k * ell * ell)
        else:
            out = p.mu + p.sigma * np.expm1(p.k * ell) / p.k
    return out if out.ndim else float(out)


def gpd_sample(params: GpdParams, size, rng: np.random.Generator):
    """Draw variates by inversion of uniforms."""
    u = rng.uniform(size=size)
    # uniform() is on [0, 1); exclude the zero endpoint
    u = np.where(u == 0.0, np.finfo(float).tiny, u)
    return gpd_quantile(u, params)


def regularize_khat(k: float, M: int) -> float:
    """Shrink a shape estimate towards 0.5: ``(M k + 5) / (M + 10)``."""
    return (M * k + _REG_PSEUDO_N * _REG_TARGET) / (M + _REG_PSEUDO_N)


def _zhang_stephens(x: np.ndarray) -> tuple[float, float]:
    """Empirical-Bayes (k, sigma) for sorted positive exceedances ``x``.

    The exceedances are divided by their maximum first, so the shape estimate
    is a function of scale-free ratios only (bit-identical under scaling by a
    power of two).
    """
    scale = x[-1]
    x = x / scale
    n = x.size
    m = _GRID_BASE + int(np.sqrt(n))
    b = 1.0 - np.sqrt(m / (np.arange(1, m + 1, dtype=float) - 0.5))
    b /= _PRIOR_BS * x[int(n / 4 + 0.5) - 1]
    b += 1.0
    kk = _backend.zs_mean_log1p(b, x)
    prof = n * (np.log(-b / kk) - kk - 1.0)
    with np.errstate(over="ignore"):  # overflow only ever drives a weight to 0
        w = 1.0 / np.exp(prof - prof[:, None]).sum(axis=1)
    keep = w >= 10 * np.finfo(float).eps
    b, w = b[keep], w[keep]
    w /= w.sum()
    b_post = float(np.sum(b * w))
    k_post = float(np.mean(np.log1p(-b_post * x)))
    return k_post, -k_post / b_post * scale


def fit_gpd_tail(tail_samples, threshold: float) -> ParetoFit:
    """Fit shape and scale to ``tail_samples - threshold`` with location fixed.

    Uses the profile-likelihood quasi-Bayes estimator of Zhang & Stephens
    (2009). Scaling the exceedances by ``c > 0`` scales ``sigma`` by ``c`` and
    leaves ``k`` unchanged. Exceedances equal to zero are dropped and counted.
    """
    x = np.asarray(tail_samples, dtype=float) - threshold
    if np.any(~np.isfinite(x)):
        raise DomainError("tail samples must be finite")
    if np.any(x < 0):
        raise DomainError("tail samples must not lie below the threshold")
    n_zero = int(np.count_nonzero(x == 0))
    if n_zero:
        warnings.warn(f"dropped {n_zero} exceedances tied with the threshold", stacklevel=2)
        x = x[x > 0]
    if x.size < MIN_TAIL:
        raise InsufficientTailError(f"need at least {MIN_TAIL} exceedances, got {x.size}")
    x = np.sort(x)
    if x[0] == x[-1]:
        raise DegenerateTailError("all exceedances are equal")
    k, sigma = _zhang_stephens(x)
    if not (np.isfinite(k) and np.isfinite(sigma) and sigma > 0):
        raise DegenerateTailError(f"fit did not converge (k={k}, sigma={sigma})")
    M = int(x.size)
    return ParetoFit(k=k, sigma=sigma, mu=float(threshold), M=M,
                     k_reg=regularize_khat(k, M), n_dropped=n_zero)
