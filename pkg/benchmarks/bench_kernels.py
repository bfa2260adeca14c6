"""Compiled versus pure-Python kernels on the chain and SDE inner loops.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Both backends consume identical pre-drawn noise, so the final states are
also compared.
"""

import argparse
import time

import numpy as np

from malalimit import _backend
from malalimit.spectral import field_from_s, make_covariance

CASES = [  # (N, steps)
    (1, 200_000),
    (64, 20_000),
    (1024, 2_000),
    (4096, 500),
]


def _chain_args(N, steps, seed=0):
    cov = make_covariance(1.0, 0.25, N)
    rng = np.random.default_rng(seed)
    x = field_from_s(0.5, cov)
    xi = rng.standard_normal((steps, N))
    logu = np.log1p(-rng.random(steps))
    return cov, x, xi, logu


def bench_chain(kern, N, steps, model=1):
    cov, x, xi, logu = _chain_args(N, steps)
    S, Q, acc = np.empty(steps), np.empty(steps), np.zeros(steps, dtype=np.uint8)
    t = time.perf_counter()
    kern.advance_chain(x, cov.lambdas, cov.lambda_sq, cov.inv_lambda_sq, np.ascontiguousarray(cov.sobolev_weights),
                       model, 1.0 / np.sqrt(N), xi, logu, S, Q, acc)
    return time.perf_counter() - t, x


def bench_sde(kern, N, steps, model=1):
    cov, x, xi, _ = _chain_args(N, steps)
    h = np.full(steps, 0.8)
    t = time.perf_counter()
    kern.advance_sde(x, cov.lambdas, cov.lambda_sq, np.ascontiguousarray(cov.sobolev_weights), model, 1e-3, h, xi)
    return time.perf_counter() - t, x


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        compiled = _backend.get_kernels("compiled")
    except RuntimeError:
        print("compiled kernels not built; run: python3 setup.py build_ext --inplace")
        return
    python = _backend.get_kernels("python")
    print(f"{'kernel':<8}{'N':>6}{'steps':>9}{'compiled s':>12}{'python s':>11}{'speedup':>9}{'max |dx|':>11}")
    for name, fn in (("chain", bench_chain), ("sde", bench_sde)):
        for N, steps in CASES:
            tc = min(fn(compiled, N, steps)[0] for _ in range(args.repeat))
            tp, xp = fn(python, N, steps)
            _, xc = fn(compiled, N, steps)
            gap = float(np.max(np.abs(xc - xp)))
            print(f"{name:<8}{N:>6}{steps:>9}{tc:>12.4f}{tp:>11.4f}{tp / tc:>9.1f}{gap:>11.1e}")


if __name__ == "__main__":
    main()
