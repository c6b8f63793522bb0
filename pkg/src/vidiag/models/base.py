"""Common model contract.

A model owns its dataset and exposes the log joint density on the
unconstrained scale (Jacobian included) together with its analytic gradient.
All density and gradient methods accept a single point ``(K,)`` or a batch
``(B, K)`` and return ``()``/``(B,)`` or ``(K,)``/``(B, K)`` respectively.
"""
from __future__ import annotations

import csv
import math
from typing import Mapping

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


def normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - np.log(sd) - 0.5 * LOG_2PI


def half_cauchy_logpdf(x, scale):
    return math.log(2.0 / math.pi) - math.log(scale) - np.log1p((x / scale) ** 2)


def _as_batch(zeta):
    zeta = np.asarray(zeta, dtype=float)
    return zeta[None, :] if zeta.ndim == 1 else zeta, zeta.ndim == 1


class Model:
    """Base class; subclasses fill in the density, gradient and simulators.

    ``param_names`` label the unconstrained coordinates and
    ``constrained_names`` the constrained ones. ``monotone_map`` maps each
    constrained name that is an increasing function of a single unconstrained
    coordinate to that coordinate's index; margins missing from it need Monte
    Carlo treatment in calibration checks.
    """

    name = "model"
    param_names: tuple = ()
    constrained_names: tuple = ()
    log_index: tuple = ()  # coordinates with a log transform

    def __init__(self, data: Mapping | None = None):
        self.data = {k: np.asarray(v) for k, v in (data or {}).items()}
        for v in self.data.values():
            v.flags.writeable = False

    # -- transforms ------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.param_names)

    @property
    def vsbc_margins(self) -> tuple:
        """Margins tested by calibration runs unless others are registered."""
        return self.param_names

    @property
    def monotone_map(self) -> dict:
        return {c: i for i, c in enumerate(self.constrained_names)}

    def to_constrained(self, zeta):
        zeta = np.array(zeta, dtype=float)
        if self.log_index:
            idx = list(self.log_index)
            zeta[..., idx] = np.exp(zeta[..., idx])
        return zeta

    def to_unconstrained(self, theta):
        theta = np.array(theta, dtype=float)
        if self.log_index:
            idx = list(self.log_index)
            theta[..., idx] = np.log(theta[..., idx])
        return theta

    def log_abs_det_jacobian(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        if not self.log_index:
            return np.zeros(zeta.shape[:-1]) if zeta.ndim > 1 else 0.0
        return zeta[..., list(self.log_index)].sum(axis=-1)

    # -- densities -------------------------------------------------------
    def log_joint_constrained(self, theta):
        raise NotImplementedError

    def log_joint(self, zeta):
        theta = self.to_constrained(zeta)
        return self.log_joint_constrained(theta) + self.log_abs_det_jacobian(zeta)

    def grad_log_joint(self, zeta):
        raise NotImplementedError

    # -- simulation ------------------------------------------------------
    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def simulate_data(self, theta, rng: np.random.Generator) -> dict:
        raise NotImplementedError

    def condition(self, data: Mapping) -> "Model":
        """Copy of this model with the dataset entries in ``data`` replaced."""
        new = object.__new__(type(self))
        new.__dict__.update(self.__dict__)
        merged = dict(self.data)
        merged.update({k: np.asarray(v) for k, v in data.items()})
        Model.__init__(new, merged)
        new._on_data()
        return new

    def _on_data(self):
        """Recompute cached data summaries after ``condition``."""

    def exact_posterior(self):
        """Exact posterior as a mean-field Gaussian, when one exists."""
        return None

    def describe(self) -> dict:
        return {"name": self.name, "dim": self.dim}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


def data_to_csv(data: Mapping, path) -> None:
    """Write equal-length 1-d/2-d arrays as CSV columns (2-d as ``name_1..``)."""
    cols, names = [], []
    n = None
    for key, arr in data.items():
        arr = np.asarray(arr, dtype=float)
        n = arr.shape[0] if n is None else n
        if arr.shape[0] != n:
            raise ValueError("data arrays must share their leading dimension")
        if arr.ndim == 1:
            cols.append(arr)
            names.append(key)
        else:
            for j in range(arr.shape[1]):
                cols.append(arr[:, j])
                names.append(f"{key}_{j + 1}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def data_from_csv(path) -> dict:
    """Inverse of ``data_to_csv``."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    values = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    groups: dict[str, list[tuple[int, int]]] = {}
    for col, name in enumerate(header):
        stem, _, idx = name.rpartition("_")
        if stem and idx.isdigit():
            groups.setdefault(stem, []).append((int(idx), col))
        else:
            groups.setdefault(name, []).append((0, col))
    out = {}
    for key, members in groups.items():
        if len(members) == 1 and members[0][0] == 0:
            out[key] = values[:, members[0][1]]
        else:
            out[key] = values[:, [c for _, c in sorted(members)]]
    return out
