"""Timing comparison of the numpy and numba element kernels.

Times batch_stiffness (the assembly hot spot) and batch_bmat on a block
of randomly distorted quadrilaterals, once per backend.  The numba
backend is warmed up before timing so JIT compilation is not charged to
the measurement.  Run from the repository root:

    python3 benchmarks/kernel_benchmark.py --elems 20000 --order 2
"""

import argparse
import time

import numpy as np

from goalfem import kernels
from goalfem.elasticity import Material
from goalfem.mesh import gauss2d


def make_coords(n, rng):
    base = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    jitter = 0.15 * rng.standard_normal((n, 4, 2))
    offsets = rng.uniform(0.0, 50.0, size=(n, 1, 2))
    return base[None, :, :] + jitter + offsets


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--elems", type=int, default=20000)
    ap.add_argument("--order", type=int, default=2,
                    help="Gauss order (the annulus cases assemble at 8)")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    coords = make_coords(args.elems, rng)
    D = Material(E=1000.0, nu=0.3).D
    gp, gw = gauss2d(args.order)

    backends = ["numpy"]
    if kernels.HAS_NUMBA:
        backends.append("numba")
    else:
        print("numba unavailable, timing numpy only")

    results = {}
    for name in backends:
        kernels.use_backend(name)
        # warm up: triggers JIT compilation on the numba path and page
        # faults either way
        kernels.batch_stiffness(coords[:64], D, gp, gw)
        kernels.batch_bmat(coords[:64], gp)
        results[name] = (
            best_of(lambda: kernels.batch_stiffness(coords, D, gp, gw),
                    args.repeats),
            best_of(lambda: kernels.batch_bmat(coords, gp), args.repeats),
        )

    print(f"{args.elems} elements, order {args.order} "
          f"({len(gw)} points), best of {args.repeats}")
    print(f"{'backend':>8} {'stiffness':>12} {'bmat':>12}")
    for name in backends:
        ts, tb = results[name]
        print(f"{name:>8} {ts * 1e3:>10.2f}ms {tb * 1e3:>10.2f}ms")
    if len(backends) == 2:
        s = results["numpy"][0] / results["numba"][0]
        b = results["numpy"][1] / results["numba"][1]
        print(f"numba speedup: stiffness {s:.1f}x, bmat {b:.1f}x")

    # the two paths must agree to round-off on identical input
    kernels.use_backend("numpy")
    want = kernels.batch_stiffness(coords[:256], D, gp, gw)
    if kernels.HAS_NUMBA:
        kernels.use_backend("numba")
        got = kernels.batch_stiffness(coords[:256], D, gp, gw)
        err = float(np.abs(want - got).max() / np.abs(want).max())
        print(f"cross-backend max relative deviation: {err:.2e}")


if __name__ == "__main__":
    main()
