"""Variational simulation-based calibration (VSBC).

Each replication draws ``theta0`` from the prior, simulates a dataset, refits
the variational approximation and records, for every registered margin, the
calibration probability

    p = Pr(theta0 < theta*),   theta* ~ q.

If ``q`` is centred on the true posterior median the distribution of ``p``
over replications is symmetric about 1/2. Mass piling up near 1 means ``q``
sits above the truth (over-estimation, reported as ``RightSkewed``); mass
near 0 means under-estimation (``LeftSkewed``). Symmetry is a heuristic
check: an asymmetric histogram is evidence of bias, not a proof of it.

Symmetry testing
----------------
The samples ``{p_j}`` and ``{1 - p_j}`` are not independent, so the usual
two-sample Kolmogorov null does not apply to them. Writing ``s_j`` for the
sign of ``p_j - 1/2``, the ECDF gap between the two samples is a partial sum
of the ``s_j`` taken in decreasing order of ``|p_j - 1/2|``. Under symmetry the
signs are fair coin flips independent of the ordering, so ``sqrt(M) D``
converges to ``sup |W|`` over ``[0, 1]`` for a Brownian motion ``W`` and the
one-sided statistics to ``sup W``. Those limits give the p-values used for
the skew flags. The naive two-sample p-value is reported alongside.
"""
from __future__ import annotations

import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov, ndtr

from vidiag import _backend
from vidiag.errors import (DomainError, NonFiniteLogJointError, OptimizerDivergedError,
                           VsbcAbortedError)
from vidiag.vi import MeanFieldGaussian, ViConfig, advi_fit

DEFAULT_ALPHA = 0.05
MC_CALIBRATION_DRAWS = 1000
MAX_FAILURE_FRACTION = 0.2
MIN_RECOMMENDED_M = 100
HEURISTIC_NOTE = ("Skew flags are heuristic evidence of point-estimate bias; symmetry of the "
                  "calibration histogram is guaranteed only for symmetric posteriors and "
                  "symmetric approximations.")


class Alternative(str, enum.Enum):
    TWO_SIDED = "two-sided"
    LESS = "less"
    GREATER = "greater"


class Skew(str, enum.Enum):
    SYMMETRIC = "Symmetric"
    RIGHT = "RightSkewed"
    LEFT = "LeftSkewed"


@dataclass(frozen=True)
class KsResult:
    statistic: float
    pvalue: float
    alternative: Alternative

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "pvalue": self.pvalue,
                "alternative": self.alternative.value}


# -- Kolmogorov-Smirnov -----------------------------------------------------

def _sorted_sample(values, name) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return np.sort(arr)


def ks_two_sample(x, y, alternative: Alternative | str = Alternative.TWO_SIDED) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test with asymptotic p-values.

    ECDFs are compared at every pooled unique value, so ties are handled
    exactly. ``greater`` uses ``D+ = sup(F_x - F_y)`` and ``less`` uses
    ``D- = sup(F_y - F_x)``. With ``n = nx ny / (nx + ny)`` the p-values are
    ``Q_KS(sqrt(n) D)`` (two-sided) and ``exp(-2 n D^2)`` (one-sided).
    Small-sample exact distributions are not computed.
    """
    alternative = Alternative(alternative)
    xs = _sorted_sample(x, "x")
    ys = _sorted_sample(y, "y")
    d_plus, d_minus = _backend.ks_sweep(xs, ys)
    n_eff = xs.size * ys.size / (xs.size + ys.size)
    if alternative is Alternative.TWO_SIDED:
        d = max(d_plus, d_minus)
        p = float(kolmogorov(math.sqrt(n_eff) * d))
    else:
        d = d_plus if alternative is Alternative.GREATER else d_minus
        p = math.exp(-2.0 * n_eff * d * d)
    return KsResult(float(d), min(max(p, 0.0), 1.0), alternative)


def sup_abs_brownian_sf(a: float, terms: int = 100) -> float:
    """``Pr(sup_{0<=t<=1} |W(t)| > a)`` for standard Brownian motion."""
    if a <= 0:
        return 1.0
    k = np.arange(terms)
    s = np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) ** 2) * math.pi ** 2 / (8.0 * a * a)))
    return float(min(max(1.0 - 4.0 / math.pi * s, 0.0), 1.0))


def sup_brownian_sf(a: float) -> float:
    """``Pr(sup_{0<=t<=1} W(t) > a) = 2 (1 - Phi(a))`` for ``a >= 0``."""
    return float(min(2.0 * ndtr(-a), 1.0)) if a > 0 else 1.0


@dataclass(frozen=True)
class SymmetryTest:
    """Symmetry of a sample of calibration probabilities about 1/2."""

    two_sided: KsResult
    less: KsResult
    greater: KsResult
    two_sided_naive: KsResult
    skew: Skew
    n: int

    def to_dict(self) -> dict:
        return {"n": self.n, "skew": self.skew.value,
                "ks_two_sided": self.two_sided.to_dict(),
                "ks_one_sided_less": self.less.to_dict(),
                "ks_one_sided_greater": self.greater.to_dict(),
                "ks_two_sided_naive": self.two_sided_naive.to_dict()}


def symmetry_test(pvals, alpha: float = DEFAULT_ALPHA) -> SymmetryTest:
    """Test whether ``{p}`` and ``{1 - p}`` share a distribution.

    ``less`` rejects when ``p`` is stochastically larger than ``1 - p``
    (mass near 1, over-estimation) and ``greater`` in the opposite case.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    p = np.asarray(pvals, dtype=float).reshape(-1)
    if p.size == 0:
        raise DomainError("no calibration probabilities to test")
    if np.any((p < 0) | (p > 1)):
        raise DomainError("calibration probabilities must lie in [0, 1]")
    xs = np.sort(p)
    ys = np.sort(1.0 - p)
    d_plus, d_minus = _backend.ks_sweep(xs, ys)
    root_n = math.sqrt(p.size)
    d = max(d_plus, d_minus)
    two = KsResult(float(d), sup_abs_brownian_sf(root_n * d), Alternative.TWO_SIDED)
    less = KsResult(float(d_minus), sup_brownian_sf(root_n * d_minus), Alternative.LESS)
    greater = KsResult(float(d_plus), sup_brownian_sf(root_n * d_plus), Alternative.GREATER)
    naive = ks_two_sample(p, 1.0 - p)

    if two.pvalue >= alpha:
        skew = Skew.SYMMETRIC
    else:
        right, left = less.pvalue < alpha, greater.pvalue < alpha
        if right and (not left or d_minus >= d_plus):
            skew = Skew.RIGHT
        else:
            skew = Skew.LEFT
    return SymmetryTest(two, less, greater, naive, skew, int(p.size))


def histogram_bins(pvals, n_bins: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width counts on ``[0, 1]``; the last bin is closed on the right."""
    p = np.asarray(pvals, dtype=float).reshape(-1)
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if np.any((p < 0) | (p > 1)):
        raise DomainError("values must lie in [0, 1]")
    counts, edges = np.histogram(p, bins=n_bins, range=(0.0, 1.0))
    return counts, edges


# -- calibration probabilities ----------------------------------------------

@dataclass(frozen=True)
class Margin:
    """A registered margin: ``coord`` indexes an unconstrained coordinate when
    ``analytic`` is true, otherwise a constrained coordinate handled by Monte
    Carlo."""

    label: str
    coord: int
    analytic: bool


def resolve_margin(model, name: str) -> Margin:
    """Map a parameter name to a margin.

    Unconstrained names (``log_sigma``) and constrained names that are an
    increasing function of one unconstrained coordinate (``sigma``) both give
    the exact normal-CDF calibration; other constrained names fall back to
    Monte Carlo.
    """
    if name in model.param_names:
        return Margin(name, model.param_names.index(name), True)
    mono = model.monotone_map
    if name in mono:
        return Margin(name, int(mono[name]), True)
    if name in model.constrained_names:
        return Margin(name, model.constrained_names.index(name), False)
    raise KeyError(f"{model.name} has no parameter named {name!r}")


def calibration_prob(q: MeanFieldGaussian, model, theta0, margin, rng=None,
                     n_draws: int = MC_CALIBRATION_DRAWS) -> float:
    """``Pr(theta0_i < theta*_i)`` for ``theta* ~ q``.

    ``margin`` is a ``Margin``, a parameter name, or an integer unconstrained
    coordinate. Monotone margins use the normal CDF on the unconstrained
    scale; others average ``n_draws`` transformed draws from ``q`` (``rng``
    required).
    """
    if isinstance(margin, str):
        margin = resolve_margin(model, margin)
    elif not isinstance(margin, Margin):
        i = int(margin)
        margin = Margin(model.param_names[i], i, True)
    theta0 = np.asarray(theta0, dtype=float)
    if margin.analytic:
        with np.errstate(divide="ignore", invalid="ignore"):
            zeta0 = model.to_unconstrained(theta0)[margin.coord]
        if np.isnan(zeta0):
            raise DomainError(f"theta0 maps to NaN on margin {margin.label}")
        z = (zeta0 - q.mu[margin.coord]) / q.sd[margin.coord]
        return float(ndtr(-z))
    if rng is None:
        raise ValueError("Monte Carlo calibration needs an rng")
    draws = q.mu + q.sd * rng.standard_normal((n_draws, q.K))
    theta = model.to_constrained(draws)[:, margin.coord]
    return float(np.mean(theta0[margin.coord] < theta))


# -- the replication loop ---------------------------------------------------

def replication_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for replication ``index`` (``SeedSequence([seed, index])``)."""
    return np.random.default_rng([int(seed), int(index)])


def _replicate(args):
    model, margins, config, seed, index, oracle, bias, n_mc = args
    rng = replication_rng(seed, index)
    theta0 = model.sample_prior(rng)
    fitted = model.condition(model.simulate_data(theta0, rng))
    if oracle:
        q = fitted.exact_posterior()
        if q is None:
            raise ValueError(f"{model.name} has no exact posterior for oracle mode")
    else:
        try:
            q = advi_fit(fitted, config, rng=rng).q
        except (OptimizerDivergedError, NonFiniteLogJointError) as exc:
            return index, None, str(exc)
    if bias is not None:
        q = q.shifted(bias)
    row = [calibration_prob(q, fitted, theta0, m, rng=rng, n_draws=n_mc) for m in margins]
    return index, row, None


def _n_workers(requested) -> int:
    cap = os.environ.get("VIDIAG_THREADS")
    n = 1 if requested is None else int(requested)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass
class VsbcReport:
    """Calibration probabilities and per-margin symmetry tests.

    ``pvals`` has one row per successful replication (in replication order,
    ``replications`` gives their indices) and one column per margin.
    """

    margins: list
    pvals: np.ndarray
    tests: list
    alpha: float
    failures: int
    attempted: int
    replications: np.ndarray
    oracle: bool = False
    failure_messages: list = field(default_factory=list)

    @property
    def M(self) -> int:
        return self.pvals.shape[0]

    @property
    def skew(self) -> dict:
        return {m: t.skew for m, t in zip(self.margins, self.tests)}

    @property
    def ks_two_sided(self) -> dict:
        return {m: t.two_sided for m, t in zip(self.margins, self.tests)}

    @property
    def ks_one_sided_less(self) -> dict:
        return {m: t.less for m, t in zip(self.margins, self.tests)}

    @property
    def ks_one_sided_greater(self) -> dict:
        return {m: t.greater for m, t in zip(self.margins, self.tests)}

    @property
    def expected_false_flags(self) -> float:
        """Flags expected under the null when every margin is tested at ``alpha``."""
        return len(self.margins) * self.alpha

    def flagged(self) -> list:
        return [m for m, t in zip(self.margins, self.tests) if t.skew is not Skew.SYMMETRIC]

    def histogram(self, margin: str, n_bins: int = 10):
        return histogram_bins(self.pvals[:, self.margins.index(margin)], n_bins)

    def to_dict(self, n_bins: int = 10) -> dict:
        per_margin = {}
        for j, (m, t) in enumerate(zip(self.margins, self.tests)):
            counts, edges = histogram_bins(self.pvals[:, j], n_bins)
            entry = t.to_dict()
            entry["histogram"] = {"counts": counts.tolist(), "edges": edges.tolist()}
            per_margin[m] = entry
        return {
            "M": self.M,
            "attempted": self.attempted,
            "failures": self.failures,
            "alpha": self.alpha,
            "oracle": self.oracle,
            "margins": list(self.margins),
            "per_margin": per_margin,
            "flagged": self.flagged(),
            "expected_false_flags": self.expected_false_flags,
            "note": HEURISTIC_NOTE,
        }


def vsbc_run(model, M: int, vi_config: ViConfig | None = None, alpha: float = DEFAULT_ALPHA,
             seed: int | None = None, margins=None, oracle: bool = False, bias=None,
             n_mc: int = MC_CALIBRATION_DRAWS, workers: int | None = None) -> VsbcReport:
    """Run ``M`` calibration replications of ``model``.

    Parameters
    ----------
    model : Model
        Template model; each replication conditions it on simulated data.
    M : int
        Number of replications. At least 100 is advisable for test power.
    vi_config : ViConfig, optional
        Optimiser settings for every refit.
    seed : int, optional
        Root seed, defaults to ``vi_config.seed``. Replication ``j`` uses the
        stream ``SeedSequence([seed, j])`` for prior, data and fit alike, so
        results do not depend on ``workers``.
    margins : sequence of str, optional
        Pre-registered margins; defaults to ``model.vsbc_margins``.
    oracle : bool
        Replace the variational fit by the model's exact posterior.
    bias : array_like, optional
        Shift added to every fitted mean (unconstrained scale). A testing hook.
    workers : int, optional
        Process count, capped by ``VIDIAG_THREADS``.

    Raises
    ------
    VsbcAbortedError
        When more than 20% of the replications fail to fit.
    """
    if M < 2:
        raise ValueError("M must be at least 2")
    config = vi_config if vi_config is not None else ViConfig()
    seed = config.seed if seed is None else int(seed)
    names = list(margins) if margins is not None else list(model.vsbc_margins)
    resolved = [resolve_margin(model, n) for n in names]
    bias_vec = None if bias is None else np.broadcast_to(np.asarray(bias, dtype=float), (model.dim,)).copy()
    jobs = [(model, resolved, config, seed, j, oracle, bias_vec, n_mc) for j in range(M)]
    max_failures = int(math.floor(MAX_FAILURE_FRACTION * M))

    results, failures, messages = {}, 0, []

    def collect(res):
        nonlocal failures
        index, row, err = res
        if row is None:
            failures += 1
            messages.append(f"replication {index}: {err}")
            if failures > max_failures:
                raise VsbcAbortedError(
                    f"{failures} of {M} replications failed (limit {max_failures})",
                    failures=failures, attempted=M)
        else:
            results[index] = row

    n_workers = _n_workers(workers)
    if n_workers == 1:
        for job in jobs:
            collect(_replicate(job))
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for res in pool.map(_replicate, jobs, chunksize=max(1, M // (4 * n_workers))):
                collect(res)

    order = np.array(sorted(results), dtype=int)
    pvals = np.array([results[j] for j in order], dtype=float).reshape(order.size, len(names))
    tests = [symmetry_test(pvals[:, j], alpha) for j in range(len(names))]
    messages.sort(key=lambda s: int(s.split()[1].rstrip(":")))
    return VsbcReport(margins=names, pvals=pvals, tests=tests, alpha=alpha, failures=failures,
                      attempted=M, replications=order, oracle=oracle, failure_messages=messages)
