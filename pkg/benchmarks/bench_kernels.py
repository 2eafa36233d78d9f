"""Time the compiled kernels against the pure-Python fallback.

Run from the repository root::

    python benchmarks/bench_kernels.py [--repeat 3] [--scale 1.0]

Both backends receive identical inputs; outputs are checked for equality
before timings are reported.
"""

import argparse
import time

import numpy as np

from swapsim import kernels
from swapsim.qstate import PM, RL
from swapsim.simulate import outcome_tables


def _inputs(scale, seed=0):
    rng = np.random.default_rng(seed)
    n = int(200_000 * scale)
    rows = np.array([(1, 0, 0, 1, 0, 0), (2, 0, 0, 1, 0, 1), (1, 1, 1, 1, 0, 1)], dtype=np.int64)
    pj, pa, pb = outcome_tables(0.7, PM, RL)
    resolve = (rows[rng.integers(0, 3, n)], rng.random((n, kernels.N_UNIFORMS)), 0.7,
               np.ascontiguousarray(pj), np.asarray(pa, float), np.asarray(pb, float))

    m = int(1_000_000 * scale)
    tags = np.sort(rng.integers(0, 10**10, m)).astype(np.int64)
    chans = rng.integers(0, 6, m).astype(np.uint8)

    ta = np.sort(rng.random(m // 4) * 1e9)
    tb = np.sort(rng.random(m // 2) * 1e9)

    k = int(20_000 * scale)
    x = rng.random(k) * 3e10
    diff = 4.77e5 + 2e-8 * x + rng.normal(0, 0.3, k)
    diff[k // 10:] = 4.77e5 + rng.uniform(-5e5, 5e5, k - k // 10)
    ds = np.linspace(-1e-7, 1e-7, 256)

    return {
        "resolve_pulses": resolve,
        "pair_bsm": (tags, chans, 6),
        "match_greedy": (ta, tb, -2.5, 2.5),
        "pair_diffs": (ta[:20_000], tb, -2000.0, 2000.0),
        "hough_peak": (x, diff, ds, -2.3e4, 2.0, 1_000_000),
    }


def _equal(a, b):
    if isinstance(a, tuple):
        return all(_equal(u, v) for u, v in zip(a, b))
    return bool(np.array_equal(np.asarray(a), np.asarray(b)))


def _best(fn, args, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply input sizes")
    args = ap.parse_args(argv)

    py = kernels.get_backend("python")
    try:
        cy = kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels not built; only the Python backend is available")
        return 1

    print(f"{'kernel':<16}{'python s':>12}{'cython s':>12}{'speedup':>10}  same")
    for name, inputs in _inputs(args.scale).items():
        t_py, out_py = _best(getattr(py, name), inputs, args.repeat)
        t_cy, out_cy = _best(getattr(cy, name), inputs, args.repeat)
        print(f"{name:<16}{t_py:>12.4f}{t_cy:>12.4f}{t_py / t_cy:>10.1f}  {_equal(out_py, out_cy)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
