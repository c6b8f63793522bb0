"""Mean-field Gaussian ADVI on the unconstrained scale.

The ELBO gradient uses the reparameterisation ``zeta = mu + exp(omega) * eps``
with standard-normal ``eps``; the entropy term ``sum(omega) + K/2 log(2 pi e)``
is exact. Step sizes follow an accumulated-squared-gradient rule

    step = eta * g / (1e-8 + sqrt(sum of past g**2))

Every ``eval_every`` iterations a fresh Monte Carlo ELBO estimate is recorded
and the optimisation stops once the mean or the median of the last 10 relative
ELBO changes falls below ``tol_rel_obj``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from vidiag.errors import NonFiniteLogJointError, OptimizerDivergedError

LOG_2PI = float(np.log(2.0 * np.pi))
ADAGRAD_EPS = 1e-8
STOP_WINDOW = 10
MAX_REDRAWS = 10


@dataclass(frozen=True)
class MeanFieldGaussian:
    """Independent normals with means ``mu`` and log standard deviations ``omega``."""

    mu: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float)).copy()
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float)).copy()
        if mu.shape != omega.shape or mu.ndim != 1:
            raise ValueError("mu and omega must be vectors of equal length")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(omega))):
            raise ValueError("mu and omega must be finite")
        mu.flags.writeable = False
        omega.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "omega", omega)

    @classmethod
    def standard(cls, K: int) -> "MeanFieldGaussian":
        return cls(np.zeros(K), np.zeros(K))

    @property
    def K(self) -> int:
        return self.mu.size

    @property
    def sd(self) -> np.ndarray:
        return np.exp(self.omega)

    def log_density(self, zeta) -> np.ndarray:
        zeta = np.asarray(zeta, dtype=float)
        eps = (zeta - self.mu) / self.sd
        return -0.5 * np.sum(eps * eps, axis=-1) - np.sum(self.omega) - 0.5 * self.K * LOG_2PI

    def entropy(self) -> float:
        return float(np.sum(self.omega) + 0.5 * self.K * (1.0 + LOG_2PI))

    def shifted(self, delta) -> "MeanFieldGaussian":
        return MeanFieldGaussian(self.mu + np.asarray(delta, dtype=float), self.omega)


def sample_q(q: MeanFieldGaussian, S: int, rng: np.random.Generator):
    """``S`` independent draws from ``q`` and their exact log densities."""
    if S < 1:
        raise ValueError("S must be at least 1")
    eps = rng.standard_normal((S, q.K))
    draws = q.mu + q.sd * eps
    log_q = -0.5 * np.sum(eps * eps, axis=1) - np.sum(q.omega) - 0.5 * q.K * LOG_2PI
    return draws, log_q


@dataclass(frozen=True)
class ViConfig:
    tol_rel_obj: float = 0.01
    eta: float = 0.1
    n_mc_grad: int = 1
    n_mc_elbo: int = 100
    max_iters: int = 10000
    eval_every: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("tol_rel_obj", "eta", "n_mc_grad", "n_mc_elbo", "max_iters", "eval_every"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.tol_rel_obj < 1:
            raise ValueError("tol_rel_obj must be below 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "ViConfig":
        return ViConfig(**{**asdict(self), **changes})


def _finite_log_joint(model, q, n, rng):
    """Draw ``n`` points from q with finite log joint, redrawing rejects."""
    eps = rng.standard_normal((n, q.K))
    zeta = q.mu + q.sd * eps
    lp = model.log_joint(zeta)
    for _ in range(MAX_REDRAWS):
        bad = ~np.isfinite(lp)
        if not bad.any():
            return eps, zeta, lp
        eps[bad] = rng.standard_normal((int(bad.sum()), q.K))
        zeta[bad] = q.mu + q.sd * eps[bad]
        lp[bad] = model.log_joint(zeta[bad])
    raise NonFiniteLogJointError(f"log joint still non-finite after {MAX_REDRAWS} redraws")


def elbo_estimate(q: MeanFieldGaussian, model, n_mc: int, rng: np.random.Generator) -> float:
    """Monte Carlo ELBO with the entropy term in closed form."""
    _, _, lp = _finite_log_joint(model, q, n_mc, rng)
    return float(np.mean(lp) + q.entropy())


def elbo_grad_terms(q: MeanFieldGaussian, model, eps):
    """Per-draw reparameterisation gradient terms for given standard normals.

    Returns arrays ``(g_mu, g_omega)`` of shape ``(n, K)``; their column means
    are the ELBO gradient (the entropy's ``+1`` on omega is included).
    """
    eps = np.atleast_2d(eps)
    zeta = q.mu + q.sd * eps
    g = model.grad_log_joint(zeta)
    return g, g * eps * q.sd + 1.0


def elbo_grad(q: MeanFieldGaussian, model, eps):
    g_mu, g_omega = elbo_grad_terms(q, model, eps)
    return g_mu.mean(axis=0), g_omega.mean(axis=0)


@dataclass
class ViFit:
    q: MeanFieldGaussian
    trace: np.ndarray  # rows: (iteration, elbo, relative change)
    n_iters: int
    converged: bool
    config: ViConfig = field(default_factory=ViConfig)

    @property
    def n_evals(self) -> int:
        return self.trace.shape[0]


def _rel_change(curr, prev):
    return abs((curr - prev) / curr) if curr != 0 else np.inf


def advi_fit(model, config: ViConfig = ViConfig(), init: MeanFieldGaussian | None = None,
             rng: np.random.Generator | None = None) -> ViFit:
    """Fit a mean-field Gaussian by stochastic gradient ascent on the ELBO.

    Initialisation defaults to ``mu = 0, omega = 0``. ``rng`` defaults to a
    generator seeded with ``config.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    K = model.dim
    q0 = init if init is not None else MeanFieldGaussian.standard(K)
    mu = q0.mu.copy()
    omega = q0.omega.copy()
    acc_mu = np.zeros(K)
    acc_omega = np.zeros(K)
    rows = []
    window = deque(maxlen=STOP_WINDOW)
    prev = None
    converged = False
    it = 0

    def diverged(msg):
        return OptimizerDivergedError(msg, trace=np.array(rows, dtype=float).reshape(-1, 3))

    with np.errstate(over="ignore", invalid="ignore"):
        for it in range(1, config.max_iters + 1):
            eps = rng.standard_normal((config.n_mc_grad, K))
            sd = np.exp(omega)
            g = model.grad_log_joint(mu + sd * eps)
            g_mu = g.mean(axis=0)
            g_omega = (g * eps).mean(axis=0) * sd + 1.0
            if not (np.all(np.isfinite(g_mu)) and np.all(np.isfinite(g_omega))):
                raise diverged(f"non-finite gradient at iteration {it}")
            acc_mu += g_mu * g_mu
            acc_omega += g_omega * g_omega
            mu += config.eta * g_mu / (ADAGRAD_EPS + np.sqrt(acc_mu))
            omega += config.eta * g_omega / (ADAGRAD_EPS + np.sqrt(acc_omega))

            if it % config.eval_every:
                continue
            try:
                q = MeanFieldGaussian(mu, omega)
                elbo = elbo_estimate(q, model, config.n_mc_elbo, rng)
            except (ValueError, NonFiniteLogJointError) as exc:
                raise diverged(f"ELBO evaluation failed at iteration {it}: {exc}") from exc
            if not np.isfinite(elbo):
                rows.append((it, elbo, np.nan))
                raise diverged(f"non-finite ELBO at iteration {it}")
            rel = np.nan if prev is None else _rel_change(elbo, prev)
            rows.append((it, elbo, rel))
            prev = elbo
            if np.isfinite(rel):
                window.append(rel)
                if np.mean(window) < config.tol_rel_obj or np.median(window) < config.tol_rel_obj:
                    converged = True
                    break

    return ViFit(q=MeanFieldGaussian(mu, omega), trace=np.array(rows, dtype=float).reshape(-1, 3),
                 n_iters=it, converged=converged, config=config)
