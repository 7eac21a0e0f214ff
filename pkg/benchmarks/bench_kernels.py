"""Time the compiled conv/pool kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""
import argparse
import time

import numpy as np

from pdmm.nn import _kernels_py

try:
    from pdmm.nn import _kernels_cy
except ImportError:
    _kernels_cy = None

SHAPES = [
    ("conv 3->8 @62", (3, 64, 64), (8, 3, 3, 3)),
    ("conv 8->16 @29", (8, 31, 31), (16, 8, 3, 3)),
    ("conv 16->32 @12", (16, 14, 14), (32, 16, 3, 3)),
]


def time_fn(fn, *args, repeats=20):
    fn(*args)  # warm-up
    start = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - start) / repeats


def bench(mod, repeats):
    rng = np.random.default_rng(0)
    rows = []
    for label, xshape, kshape in SHAPES:
        x = rng.standard_normal(xshape)
        kernel = rng.standard_normal(kshape)
        bias = rng.standard_normal(kshape[0])
        y = mod.conv2d_forward(x, kernel, bias, 1)
        dy = rng.standard_normal(y.shape)
        rows.append((label + " fwd", time_fn(mod.conv2d_forward, x, kernel, bias, 1,
                                             repeats=repeats)))
        rows.append((label + " bwd", time_fn(mod.conv2d_backward, x, kernel, 1, dy,
                                             repeats=repeats)))
    x = rng.standard_normal((8, 62, 62))
    _, arg = mod.maxpool2_forward(x)
    dy = rng.standard_normal((8, 31, 31))
    rows.append(("pool @62 fwd", time_fn(mod.maxpool2_forward, x, repeats=repeats)))
    rows.append(("pool @62 bwd", time_fn(mod.maxpool2_backward, x.shape, arg, dy,
                                         repeats=repeats)))
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()

    py = dict(bench(_kernels_py, args.repeats))
    cy = dict(bench(_kernels_cy, args.repeats)) if _kernels_cy else {}

    width = max(len(k) for k in py)
    header = f"{'kernel':<{width}}  {'python':>10}  {'cython':>10}  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, t_py in py.items():
        if cy:
            t_cy = cy[name]
            print(f"{name:<{width}}  {t_py * 1e6:>8.1f}us  {t_cy * 1e6:>8.1f}us  "
                  f"{t_py / t_cy:>7.2f}x")
        else:
            print(f"{name:<{width}}  {t_py * 1e6:>8.1f}us  {'n/a':>10}  {'n/a':>8}")
    if not cy:
        print("\ncompiled extension not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
