"""Compare the numba kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Also times the full Gram path on one dimension-4 test function, once per
backend (the numpy run uses KDVCARLEMAN_NO_NUMBA=1 in a subprocess).
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from kdvcarleman import _kernels


def best_of(fn, repeat):
    fn()  # warm-up (numba compiles here)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def poly_case(n, dim):
    rng = np.random.default_rng(0)
    axes = [np.linspace(-1.5, 1.5, n, endpoint=False) for _ in range(dim)]
    exps = rng.integers(0, 4, size=(12, dim))
    coeffs = rng.normal(size=12) + 1j * rng.normal(size=12)
    return axes, exps, coeffs


def gram_case(R, dim, nuniq, npow):
    rng = np.random.default_rng(1)
    F = rng.normal(size=(dim, nuniq, 32)) + 1j * rng.normal(size=(dim, nuniq, 32))
    U = np.einsum("kan,kbn->kab", F, F.conj())
    idx = rng.integers(0, nuniq, size=(R, dim))
    w = rng.normal(size=R) + 1j * rng.normal(size=R)
    grp = rng.integers(0, npow, size=R)
    return U, idx, w, grp, npow


SWEEP_SNIPPET = """
import time
from kdvcarleman.catalog import build, default_weight
from kdvcarleman.grid import Grid, op_norm_sq_poly
from kdvcarleman.harness import gen_test_functions
from kdvcarleman.hypotheses import Region
from kdvcarleman.operators import build_p1, weighted_conjugate
from kdvcarleman import _kernels
S = build('heisenberg1'); K = Region.cube(4)
fam = gen_test_functions(K, Grid.around(K, 64), 6, 7)
A = weighted_conjugate(build_p1(S), default_weight(S))
op_norm_sq_poly(A, fam[0])
t = time.perf_counter()
for v in fam:
    op_norm_sq_poly(A, v)
print(_kernels.backend(), (time.perf_counter() - t) / len(fam))
"""


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.USE_NUMBA:
        print("numba disabled or unavailable; nothing to compare")
        return
    print(f"{'kernel':<32} {'numba [s]':>10} {'numpy [s]':>10} {'speedup':>8} {'max |diff|':>11}")
    for n, dim in [(256, 2), (64, 3), (32, 4)]:
        a = poly_case(n, dim)
        tn = best_of(lambda: _kernels.poly_on_grid(*a), args.repeat)
        tp = best_of(lambda: _kernels.poly_on_grid_numpy(*a), args.repeat)
        diff = np.abs(_kernels.poly_on_grid(*a) - _kernels.poly_on_grid_numpy(*a)).max()
        print(f"{f'poly_on_grid {n}^{dim}':<32} {tn:>10.4f} {tp:>10.4f} {tp / tn:>8.1f} {diff:>11.2e}")
    for R, dim in [(200, 2), (600, 4), (1200, 4)]:
        a = gram_case(R, dim, 60, 4)
        tn = best_of(lambda: _kernels.gram_contract(*a), args.repeat)
        tp = best_of(lambda: _kernels.gram_contract_numpy(*a), args.repeat)
        H1, H2 = _kernels.gram_contract(*a), _kernels.gram_contract_numpy(*a)
        diff = np.abs(H1 - H2).max() / np.abs(H2).max()
        print(f"{f'gram_contract R={R} dim={dim}':<32} {tn:>10.4f} {tp:>10.4f} {tp / tn:>8.1f} {diff:>11.2e}")
    print("\nGram path, heisenberg1 at 64^4, seconds per test function:")
    for flag in ("0", "1"):
        env = dict(os.environ, KDVCARLEMAN_NO_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SWEEP_SNIPPET], env=env, capture_output=True, text=True)
        print("  " + (out.stdout.strip() or out.stderr.strip().splitlines()[-1]))


if __name__ == "__main__":
    main()
