"""Compare the numba and numpy kernel paths on realistic workloads.

    python3 benchmarks/bench_kernels.py [--sizes N ...] [--cells C]
                                        [--repeats R] [--seed S]

Times point location in a built partition tree and the full threshold sweep
of a 1-d projection, printing best-of-R wall times for each backend and the
speedup.  Run with EXPLAUDIT_NUMBA=0 to check that the dispatcher itself
falls back (the numba columns then repeat the interpreted loop timings).
"""

import argparse
import time

import numpy as np

import explaudit as ex
from explaudit import _kernels


def best_of(repeats, fn, *args):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_locate(sizes, cells, repeats, rng):
    dist = ex.ProductDistribution.uniform_box([0.0, 0.0], [1.0, 1.0])
    spec = ex.build_partition(dist, 1.0 / (2.0 * cells), 4)
    print(f"\nlocate_points: {spec.n_cells}-cell tree, dim 2")
    print(f"{'n':>10} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for n in sizes:
        X = np.ascontiguousarray(dist.sample_batch(n, rng))
        args = (spec.tree_axis, spec.tree_cut, spec.tree_left,
                spec.tree_right, spec.tree_leaf, X)
        _kernels._locate_numba(*args)  # warm the JIT outside the timer
        t_np, out_np = best_of(repeats, _kernels._locate_numpy, *args)
        t_nb, out_nb = best_of(repeats, _kernels._locate_numba, *args)
        assert np.array_equal(out_np, out_nb)
        print(f"{n:>10} {t_np * 1e3:>10.2f}ms {t_nb * 1e3:>10.2f}ms"
              f" {t_np / t_nb:>8.1f}x")


def bench_sweep(sizes, repeats, rng):
    print("\nsweep_threshold: stable-sorted projections, labels +-1")
    print(f"{'n':>10} {'numpy':>12} {'numba':>12} {'speedup':>9}")
    for n in sizes:
        proj = np.sort(rng.normal(size=n))
        y = rng.choice(np.array([-1, 1], dtype=np.int8), size=n)
        _kernels._sweep_numba(proj, y)  # warm the JIT outside the timer
        t_np, out_np = best_of(repeats, _kernels._sweep_numpy, proj, y)
        t_nb, out_nb = best_of(repeats, _kernels._sweep_numba, proj, y)
        assert out_np[0] == out_nb[0]
        print(f"{n:>10} {t_np * 1e3:>10.2f}ms {t_nb * 1e3:>10.2f}ms"
              f" {t_np / t_nb:>8.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+",
                        default=[10_000, 100_000, 1_000_000])
    parser.add_argument("--cells", type=int, default=4096,
                        help="approximate partition size for locate")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"active backend: {ex.kernel_backend()}")
    rng = np.random.default_rng(args.seed)
    bench_locate(args.sizes, args.cells, args.repeats, rng)
    bench_sweep(args.sizes, args.repeats, rng)


if __name__ == "__main__":
    main()
