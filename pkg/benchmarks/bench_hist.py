"""Compare the compiled histogram kernel with the numpy fallback.

    python3 benchmarks/bench_hist.py [--rows 50000] [--repeat 5]

Prints per-call kernel timings and, for context, the wall time of one
decision tree fit with each backend.
"""
import argparse
import time
from unittest import mock

import numpy as np

from crowdcast import kernels
from crowdcast.prep import P2
from crowdcast.trees import BinnedDataset, TreeHyper, fit_bins, train_decision_tree


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_case(rng, n, d, nodes, channels):
    bins = rng.integers(0, 32, size=(n, d), dtype=np.uint8)
    node_of_row = rng.integers(-1, nodes, size=n).astype(np.int32)
    feat_idx = np.tile(np.arange(d, dtype=np.int32), (nodes, 1))
    values = rng.integers(0, 1 << 20, size=(n, channels), dtype=np.int64)
    offsets = np.arange(d, dtype=np.int64) * 32
    return bins, node_of_row, feat_idx, values, offsets, 32 * d


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=50_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"compiled kernel available: {kernels.BACKEND == 'cython'}")
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])

    print(f"\n{'rows':>8} {'dims':>5} {'nodes':>6} {'chan':>5} " + " ".join(f"{b:>10}" for b in backends) + "  speedup")
    for d, nodes, ch in ((30, 1, 2), (30, 16, 2), (120, 8, 4), (120, 64, 3)):
        case = kernel_case(rng, args.rows, d, nodes, ch)
        ref = kernels.build_histogram(*case, backend="python")
        row = []
        for b in backends:
            assert np.array_equal(kernels.build_histogram(*case, backend=b), ref)
            row.append(best_of(lambda: kernels.build_histogram(*case, backend=b), args.repeat))
        speed = f"{row[0] / row[-1]:7.1f}x" if len(row) > 1 else "      -"
        print(f"{args.rows:>8} {d:>5} {nodes:>6} {ch:>5} " + " ".join(f"{t * 1e3:8.1f}ms" for t in row) + f"  {speed}")

    X = rng.normal(size=(args.rows, 30))
    y = (X[:, 0] + 0.5 * X[:, 1] + rng.normal(scale=0.5, size=args.rows) > 0).astype(np.int64)
    mapper = fit_bins(X, 32)
    binned = BinnedDataset(mapper.transform(X), mapper, y, np.ones(args.rows))
    print("\ndecision tree fit (depth 10, 30 dims):")
    for b in backends:
        impl = kernels._hist_py.build_histogram if b == "python" else kernels._impl
        with mock.patch.object(kernels, "_impl", impl):
            t = best_of(lambda: train_decision_tree(binned, [1.0, 1.0], P2, TreeHyper(max_depth=10)), 2)
        print(f"  {b:>7}: {t:.3f}s")


if __name__ == "__main__":
    main()
