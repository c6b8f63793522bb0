"""Random-walk Metropolis reference sampler.

The sampler is deliberately gradient-free so that it can check the models'
analytic gradients and the VI engine without sharing code with them. Chains
run in lock-step as rows of one array. During warmup the proposal scale is
tuned by Robbins-Monro on its logarithm towards an acceptance rate of 0.234;
halfway through warmup the proposal shape is reset to the covariance of the
draws seen so far. Both are frozen after warmup.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from vidiag.errors import AdaptationFailedError

TARGET_ACCEPT = 0.234
ADAPT_DECAY = 0.6
SHAPE_JITTER = 1e-10


@dataclass(frozen=True)
class McmcChain:
    """Post-warmup draws ``(T, K)`` on the unconstrained scale."""

    draws: np.ndarray
    acceptance_rate: float
    warmup: int
    scale: float

    @property
    def T(self) -> int:
        return self.draws.shape[0]

    def moments(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate first and second moments."""
        return self.draws.mean(axis=0), (self.draws ** 2).mean(axis=0)

    def mcse(self, batches: int = 20) -> np.ndarray:
        """Batch-means Monte Carlo standard error of each coordinate's mean."""
        T = self.T - self.T % batches
        if T < batches:
            raise ValueError("chain too short for batch means")
        means = self.draws[:T].reshape(batches, T // batches, -1).mean(axis=1)
        return means.std(axis=0, ddof=1) / math.sqrt(batches)


def accept_prob(log_target_current, log_target_proposed):
    """Metropolis acceptance probability for a symmetric proposal."""
    diff = np.asarray(log_target_proposed, dtype=float) - np.asarray(log_target_current, dtype=float)
    return np.exp(np.minimum(diff, 0.0))


def metropolis_chains(model, T: int, n_chains: int = 4, warmup: int | None = None,
                      rng: np.random.Generator | None = None, init=None) -> list[McmcChain]:
    """Run ``n_chains`` adaptive random-walk Metropolis chains of ``T`` iterations.

    ``warmup`` defaults to ``T // 2`` and the remaining ``T - warmup`` draws are
    kept. Chains start at ``init`` (zeros by default), where the log joint
    must be finite.

    Raises
    ------
    AdaptationFailedError
        If any chain accepts nothing after warmup.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    warmup = T // 2 if warmup is None else int(warmup)
    if T < 1 or not 0 <= warmup < T:
        raise ValueError("need T >= 1 and 0 <= warmup < T")
    K = model.dim
    x = np.zeros((n_chains, K)) if init is None else np.tile(np.asarray(init, dtype=float), (n_chains, 1))
    lp = np.asarray(model.log_joint(x), dtype=float)
    if not np.all(np.isfinite(lp)):
        raise ValueError("log joint is not finite at the initial point")

    log_scale0 = math.log(2.38 / math.sqrt(K))
    log_scale = np.full(n_chains, log_scale0)
    chol = np.eye(K)
    reshape_at = warmup // 2
    warm = np.empty((max(reshape_at, 0), n_chains, K))
    kept = np.empty((T - warmup, n_chains, K))
    accepted = np.zeros(n_chains)
    step = 0

    for t in range(T):
        if t == reshape_at and reshape_at >= 10 * K:
            tail = warm[reshape_at // 2:].reshape(-1, K)
            cov = np.atleast_2d(np.cov(tail, rowvar=False))
            try:
                chol = np.linalg.cholesky(cov + SHAPE_JITTER * np.eye(K))
                log_scale[:] = log_scale0
                step = 0
            except np.linalg.LinAlgError:
                pass
        prop = x + np.exp(log_scale)[:, None] * (rng.standard_normal((n_chains, K)) @ chol.T)
        with np.errstate(over="ignore", invalid="ignore"):
            lp_prop = np.asarray(model.log_joint(prop), dtype=float)
        alpha = np.where(np.isfinite(lp_prop), accept_prob(lp, lp_prop), 0.0)
        acc = rng.uniform(size=n_chains) < alpha
        x[acc] = prop[acc]
        lp[acc] = lp_prop[acc]
        if t < warmup:
            step += 1
            log_scale += step ** -ADAPT_DECAY * (alpha - TARGET_ACCEPT)
            if t < reshape_at:
                warm[t] = x
        else:
            kept[t - warmup] = x
            accepted += acc

    n_kept = T - warmup
    rates = accepted / n_kept
    if np.any(rates == 0):
        raise AdaptationFailedError(
            f"chains {np.flatnonzero(rates == 0).tolist()} accepted no proposals after warmup")
    return [McmcChain(kept[:, c].copy(), float(rates[c]), warmup, float(math.exp(log_scale[c])))
            for c in range(n_chains)]


def metropolis_sample(model, T: int, warmup: int | None = None,
                      rng: np.random.Generator | None = None, init=None) -> McmcChain:
    """Single-chain version of :func:`metropolis_chains`."""
    return metropolis_chains(model, T, 1, warmup, rng, init)[0]


def pool_chains(chains) -> np.ndarray:
    return np.concatenate([c.draws for c in chains], axis=0)


@dataclass(frozen=True)
class RmseResult:
    """Errors of estimated first and second moments against a reference.

    ``first``/``second`` are Euclidean norms over coordinates; the
    ``*_per_coord`` arrays hold absolute coordinate errors.
    """

    first: float
    second: float
    first_per_coord: np.ndarray
    second_per_coord: np.ndarray

    def to_dict(self) -> dict:
        return {"first": self.first, "second": self.second,
                "first_per_coord": self.first_per_coord.tolist(),
                "second_per_coord": self.second_per_coord.tolist()}


def rmse_vs_reference(mean_est, second_est, reference) -> RmseResult:
    """Moment errors against a chain, a list of chains, or a ``(mean, second)`` pair."""
    if isinstance(reference, McmcChain):
        ref_mean, ref_second = reference.moments()
    elif isinstance(reference, (list, tuple)) and reference and isinstance(reference[0], McmcChain):
        pooled = pool_chains(reference)
        ref_mean, ref_second = pooled.mean(axis=0), (pooled ** 2).mean(axis=0)
    else:
        ref_mean, ref_second = (np.asarray(r, dtype=float) for r in reference)
    m1, m2 = np.asarray(mean_est, dtype=float), np.asarray(second_est, dtype=float)
    if not m1.shape == m2.shape == ref_mean.shape == ref_second.shape:
        raise ValueError("estimate and reference coordinates do not match")
    e1, e2 = np.abs(m1 - ref_mean), np.abs(m2 - ref_second)
    return RmseResult(float(np.linalg.norm(e1)), float(np.linalg.norm(e2)), e1, e2)


def chain_to_csv(chain: McmcChain, path, names=None) -> None:
    """Write chain draws with a header row (``theta_1..`` when ``names`` is omitted)."""
    K = chain.draws.shape[1]
    names = list(names) if names is not None else [f"theta_{i + 1}" for i in range(K)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in chain.draws:
            w.writerow([repr(float(v)) for v in row])
