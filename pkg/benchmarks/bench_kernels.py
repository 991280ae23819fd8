"""Time the numba and numpy cascade kernels on the same inputs.

    python benchmarks/bench_kernels.py --n 2000 --degrees 20,212,1000,3998 --reps 50

Both kernels are called directly, so CVNA_BACKEND does not matter here.
Results are checked for equality before timing is reported.
"""
import argparse
import time

import numpy as np

from cvna import _kernels
from cvna.clearing import threshold_counts
from cvna.graph import build_system, generate_k_regular
from cvna.shocks import ShockDistribution, sample_shocks

DIST = ShockDistribution((-1.1, -0.75, 0.0), (0.02, 0.09, 0.89), 0.3)


def best_of(fn, reps):
    times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--degrees", default="20,212,1000,3998")
    ap.add_argument("--leverage", type=float, default=4.0)
    ap.add_argument("--reps", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args(argv)

    print(f"{'kernel':<10}{'k':>6}{'numba ms':>12}{'numpy ms':>12}{'speedup':>9}")
    for k in (int(x) for x in args.degrees.split(",")):
        g = generate_k_regular(args.n, k, args.seed)
        sys_ = build_system(g, args.leverage)
        s = sample_shocks(DIST, args.n, args.seed).values
        ext = sys_.net_external_assets + s
        m = threshold_counts(k, args.leverage, 1.0 + s)
        clear = (ext, g.in_neighbors, g.out_neighbors, sys_.leverage, sys_.exposure, 0.0, 0.03, 1000)
        thresh = (m, g.in_neighbors, g.out_neighbors)

        for name, nb, npy, inputs in (
            ("clearing", _kernels.clearing_cascade_numba, _kernels.clearing_cascade_numpy, clear),
            ("threshold", _kernels.threshold_cascade_numba, _kernels.threshold_cascade_numpy, thresh),
        ):
            a, b = nb(*inputs), npy(*inputs)  # first call compiles
            assert np.array_equal(a[0], b[0]), f"{name} kernels disagree at k={k}"
            t_nb, _ = best_of(lambda: nb(*inputs), args.reps)
            t_np, _ = best_of(lambda: npy(*inputs), args.reps)
            print(f"{name:<10}{k:>6}{1e3 * t_nb:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
