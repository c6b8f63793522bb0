"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np


def zs_mean_log1p(b, x):
    """Return ``mean(log1p(-b[j] * x))`` for every grid point ``b[j]``."""
    b = np.ascontiguousarray(b, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    return np.log1p(-b[:, None] * x[None, :]).mean(axis=1)


def ks_sweep(x, y):
    """Signed sup-differences of two sorted samples' ECDFs: ``(d_plus, d_minus)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    grid = np.union1d(x, y)
    fx = np.searchsorted(x, grid, side="right") / x.size
    fy = np.searchsorted(y, grid, side="right") / y.size
    diff = fx - fy
    return max(float(diff.max()), 0.0), max(float(-diff.min()), 0.0)
