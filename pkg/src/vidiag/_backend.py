"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the numpy
fallback is used. Setting ``VIDIAG_PURE_PYTHON=1`` forces the fallback.
"""
import os

from vidiag import _fallback

if os.environ.get("VIDIAG_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from vidiag import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
        BACKEND = "python"

zs_mean_log1p = _impl.zs_mean_log1p
ks_sweep = _impl.ks_sweep

__all__ = ["BACKEND", "zs_mean_log1p", "ks_sweep"]
