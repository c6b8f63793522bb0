"""Pareto-smoothed importance sampling and the k-hat diagnostic.

Typical use::

    batch = DrawBatch(draws, log_target, log_proposal)
    sw = psis_smooth(log_ratios(batch))
    sw.category          # Category.GOOD / OK / BAD
    psis_moments(batch, sw)

All arithmetic stays on the log scale until the final normalisation. Log
ratios are shifted by their maximum; every reported quantity is invariant to
that shift.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from vidiag.errors import (
    DegenerateTailError,
    DegenerateWeightsError,
    InsufficientTailError,
    InvalidDrawsError,
    TooFewDrawsError,
)
from vidiag.gpd import GpdParams, ParetoFit, fit_gpd_tail, gpd_quantile

MIN_DRAWS = 25
GOOD_MAX = 0.5
OK_MAX = 0.7


class Category(str, enum.Enum):
    GOOD = "Good"
    OK = "Ok"
    BAD = "Bad"


def _bad_rows(name, values):
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        shown = ", ".join(str(i) for i in bad[:10])
        raise InvalidDrawsError(f"non-finite {name} at draw index {shown}", indices=bad.tolist())


@dataclass(frozen=True)
class DrawBatch:
    """Draws from q with their unnormalised log target and log proposal values.

    ``draws`` may be ``None`` when only the density pairs are known (the
    k-hat diagnostic does not need the parameter values).
    """

    draws: np.ndarray | None
    log_target: np.ndarray
    log_proposal: np.ndarray

    def __post_init__(self):
        lt = np.asarray(self.log_target, dtype=float).reshape(-1)
        lq = np.asarray(self.log_proposal, dtype=float).reshape(-1)
        if lt.shape != lq.shape:
            raise InvalidDrawsError("log_target and log_proposal lengths differ")
        _bad_rows("log_target", lt)
        _bad_rows("log_proposal", lq)
        object.__setattr__(self, "log_target", lt)
        object.__setattr__(self, "log_proposal", lq)
        if self.draws is not None:
            d = np.asarray(self.draws, dtype=float)
            if d.ndim == 1:
                d = d[:, None]
            if d.shape[0] != lt.size:
                raise InvalidDrawsError("draws and log densities have different row counts")
            rows = np.flatnonzero(~np.all(np.isfinite(d), axis=1))
            if rows.size:
                raise InvalidDrawsError(
                    f"non-finite draws at index {', '.join(map(str, rows[:10]))}",
                    indices=rows.tolist(),
                )
            object.__setattr__(self, "draws", d)

    @property
    def S(self) -> int:
        return self.log_target.size

    @property
    def K(self) -> int:
        return 0 if self.draws is None else self.draws.shape[1]


@dataclass(frozen=True)
class SmoothedWeights:
    """Pareto-smoothed importance weights and the tail diagnostic.

    ``weights`` are on the linear scale relative to ``exp(shift)``, so the
    largest raw ratio maps to 1. ``khat`` is the value used for the category
    (regularised unless smoothing was run with ``regularize=False``).
    ``khat_raw``/``khat_reg`` are ``None`` when no fit was possible.
    """

    log_weights: np.ndarray
    khat_raw: float | None
    khat_reg: float | None
    pareto_fit: ParetoFit | None
    category: Category
    M: int
    shift: float
    regularized: bool = True
    fit_failed: bool = False
    constant_ratios: bool = False
    tail_index: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    @property
    def khat(self) -> float | None:
        return self.khat_reg if self.regularized else self.khat_raw

    @property
    def S(self) -> int:
        return self.log_weights.size


def tail_count(S: int) -> int:
    """Number of tail draws: ``min(floor(S / 5), ceil(3 sqrt(S)))``."""
    return min(S // 5, math.ceil(3.0 * math.sqrt(S)))


def log_ratios(batch: DrawBatch) -> np.ndarray:
    """``log_target - log_proposal`` shifted so that the maximum is zero."""
    lr = batch.log_target - batch.log_proposal
    return lr - lr.max()


def khat_category(khat: float) -> Category:
    if khat < GOOD_MAX:
        return Category.GOOD
    if khat <= OK_MAX:
        return Category.OK
    return Category.BAD


def khat_to_renyi_order(khat: float) -> float:
    """Largest Rényi order with finite divergence implied by ``khat``.

    Returns ``1 / khat``. ``khat > 0.5`` means an infinite chi-square divergence
    (order 2) and ``khat > 1`` an infinite KL(p, q) (order 1). For
    ``khat <= 0`` the ratios are bounded and every positive order is finite,
    reported as ``math.inf``.
    """
    if not np.isfinite(khat):
        raise ValueError("khat must be finite")
    if khat <= 0:
        return math.inf
    return 1.0 / khat


def psis_smooth(log_ratios, regularize: bool = True) -> SmoothedWeights:
    """Pareto-smooth a vector of log importance ratios.

    The ``M`` largest ratios are replaced, in rank order, by quantiles of the
    fitted GPD at levels ``(z - 0.5) / M`` placed above the threshold (the
    ``M + 1``-th largest ratio). All weights are then truncated at the raw
    maximum.
    """
    lr_in = np.asarray(log_ratios, dtype=float).reshape(-1)
    _bad_rows("log ratio", lr_in)
    S = lr_in.size
    if S < MIN_DRAWS:
        raise TooFewDrawsError(f"need at least {MIN_DRAWS} draws, got {S}")
    shift = float(lr_in.max())
    lr = lr_in - shift
    M = tail_count(S)

    if lr.min() == 0.0:
        return SmoothedWeights(
            log_weights=lr.copy(), khat_raw=None, khat_reg=None, pareto_fit=None,
            category=Category.GOOD, M=0, shift=shift, regularized=regularize,
            constant_ratios=True,
        )

    order = np.argsort(lr, kind="stable")
    log_thr = max(lr[order[S - M - 1]], np.log(np.finfo(float).tiny))
    tail = order[S - M:]
    thr = math.exp(log_thr)
    tail_ratios = np.exp(lr[tail])
    keep = tail_ratios > thr  # compared on the scale the fit sees
    tail, tail_ratios = tail[keep], tail_ratios[keep]
    try:
        fit = fit_gpd_tail(tail_ratios, thr)
    except (InsufficientTailError, DegenerateTailError):
        return SmoothedWeights(
            log_weights=lr.copy(), khat_raw=None, khat_reg=None, pareto_fit=None,
            category=Category.BAD, M=int(tail.size), shift=shift,
            regularized=regularize, fit_failed=True, tail_index=tail,
        )

    k_used = fit.k_reg if regularize else fit.k
    n_tail = tail.size
    levels = (np.arange(1, n_tail + 1) - 0.5) / n_tail
    with np.errstate(over="ignore", divide="ignore"):
        smoothed = np.log(gpd_quantile(levels, GpdParams(thr, fit.sigma, k_used)))
    _, group = np.unique(lr[tail], return_inverse=True)
    if group.max() + 1 < n_tail:
        # tied raw ratios share one smoothed value, so weights stay a function of the ratio
        smoothed = (np.bincount(group, smoothed) / np.bincount(group))[group]
    lw = lr.copy()
    lw[tail] = smoothed  # tail is already in ascending rank order
    np.minimum(lw, 0.0, out=lw)
    return SmoothedWeights(
        log_weights=lw, khat_raw=fit.k, khat_reg=fit.k_reg, pareto_fit=fit,
        category=khat_category(k_used), M=int(n_tail), shift=shift,
        regularized=regularize, tail_index=tail,
    )


def _normalized(weights) -> np.ndarray:
    if isinstance(weights, SmoothedWeights):
        lw = weights.log_weights
        if not np.any(np.isfinite(lw)):
            raise DegenerateWeightsError("all weights are zero")
        return np.exp(lw - logsumexp(lw))
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise DegenerateWeightsError("weights must have a positive sum")
    return w / total


def snis_estimate(h_values, weights):
    """Self-normalised estimate ``sum(h w) / sum(w)``.

    ``weights`` is a ``SmoothedWeights`` or a plain nonnegative vector (all ones
    gives the plain Monte Carlo mean under q). ``h_values`` may be ``(S,)`` or
    ``(S, d)``.
    """
    h = np.asarray(h_values, dtype=float)
    w = _normalized(weights)
    if h.shape[0] != w.size:
        raise ValueError(f"h has {h.shape[0]} rows but there are {w.size} weights")
    total = np.sum(w)
    # same 1-d pairwise reduction for numerator and denominator, so h == 1 gives exactly 1
    if h.ndim == 1:
        return float(np.sum(w * h) / total)
    cols = h.reshape(h.shape[0], -1)
    est = np.array([np.sum(w * np.ascontiguousarray(cols[:, j])) for j in range(cols.shape[1])])
    return (est / total).reshape(h.shape[1:])


def psis_moments(batch: DrawBatch, weights) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate weighted first and second moments of the draws."""
    if batch.draws is None:
        raise ValueError("batch carries no parameter draws")
    return snis_estimate(batch.draws, weights), snis_estimate(batch.draws ** 2, weights)


def psis_diagnose(batch: DrawBatch, regularize: bool = True) -> SmoothedWeights:
    """Compute log ratios from a batch and smooth them."""
    return psis_smooth(log_ratios(batch), regularize=regularize)
