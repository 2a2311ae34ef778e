"""Compiled vs numpy kernels, and TELM vs TDELM hidden-matrix cost.

    python benchmarks/bench_kernels.py [--n 4104] [--hidden 1080] [--repeats 5]
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from tdelm import kernels
from tdelm.harness import count_mults


def timeit(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=4104)
    ap.add_argument("--hidden", type=int, default=1080)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    shape, ranks = (64, 3, 4), (64, 2, 2)
    N, L = args.n, args.hidden
    cases = {
        "TELM": (rng.standard_normal((N, int(np.prod(shape)))), shape),
        "TDELM": (rng.standard_normal((N, int(np.prod(ranks)))), ranks),
    }
    b = rng.uniform(-1, 1, L)
    print(f"N={N} L={L} backends={kernels.available_backends()} (default {kernels.BACKEND})")
    x = rng.standard_normal(N * L)
    for name in kernels.available_backends():
        impl = kernels.get_backend(name)
        print(f"{name:>7} sigmoid({x.size}): {timeit(lambda: impl.sigmoid(x), args.repeats):.4f}s")

    for variant, (X, unit) in cases.items():
        W = rng.uniform(-1, 1, (L, X.shape[1]))
        ref = None
        for name in kernels.available_backends():
            impl = kernels.get_backend(name)
            t = timeit(lambda: impl.hidden_activations(X, W, b), args.repeats)
            H = impl.hidden_activations(X, W, b)
            if ref is None:
                ref = H
            err = float(np.max(np.abs(H - ref)))
            print(f"{variant:>6} {name:>7}: {t:.4f}s  mults={count_mults(variant, N, L, shape, ranks)}"
                  f"  max|diff|={err:.1e}")


if __name__ == "__main__":
    main()
