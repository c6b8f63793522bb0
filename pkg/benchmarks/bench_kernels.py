"""Time the compiled kernels against their numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--tail 3000] [--ks 20000]

Prints the best-of-``repeat`` time per call for each kernel and backend, and
the speed-up of the compiled version. The tail size matches a PSIS fit at
S = 10^6 (M = 3000); the KS size matches a large calibration sample.
"""
import argparse
import timeit

import numpy as np

from vidiag import _fallback

try:
    from vidiag import _kernels
except ImportError:  # extension not built
    _kernels = None


def _zs_inputs(n, rng):
    x = np.sort(rng.pareto(1.5, n) + 1e-3)
    m = 30 + int(np.sqrt(n))
    b = 1.0 - np.sqrt(m / (np.arange(1, m + 1) - 0.5))
    b = b / (3.0 * x[int(n / 4 + 0.5) - 1]) + 1.0 / x[-1]
    return b, x


def _best(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--tail", type=int, default=3000, help="tail sample size for the GPD kernel")
    ap.add_argument("--ks", type=int, default=20000, help="sample size for the KS sweep")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    b, x = _zs_inputs(args.tail, rng)
    u = np.sort(rng.uniform(size=args.ks))
    v = np.sort(1.0 - u)
    cases = [
        ("zs_mean_log1p", lambda mod: (lambda: mod.zs_mean_log1p(b, x))),
        ("ks_sweep", lambda mod: (lambda: mod.ks_sweep(u, v))),
    ]
    print(f"{'kernel':<16}{'python (ms)':>14}{'cython (ms)':>14}{'speed-up':>10}")
    for name, make in cases:
        t_py = _best(make(_fallback), args.repeat)
        if _kernels is None:
            print(f"{name:<16}{t_py * 1e3:>14.3f}{'n/a':>14}{'':>10}")
            continue
        assert np.allclose(make(_fallback)(), make(_kernels)(), rtol=1e-12, atol=0)
        t_cy = _best(make(_kernels), args.repeat)
        print(f"{name:<16}{t_py * 1e3:>14.3f}{t_cy * 1e3:>14.3f}{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
