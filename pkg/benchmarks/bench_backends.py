"""Compare the numba-compiled kernels with their pure-numpy twins.

Both backends run the same code on the same uniforms, so besides timing
each configuration the script checks that they return identical indices.

    python3 benchmarks/bench_backends.py --n 2000 --ks 16,32,64,128 --reps 5
"""

import argparse
import csv
import sys
import time

import numpy as np

from dppkit import ALGORITHMS, DualProjective, ProjectiveBasis, dual_factorization, use_backend
from dppkit.sampling import sample_projective_many


def make_source(n, k, algorithm, rng):
    basis = ProjectiveBasis.random(n, k, rng)
    if algorithm != "dual":
        return basis
    psi = rng.standard_normal((2 * k, k)) @ basis.v.T
    return DualProjective.from_factor(dual_factorization(psi))


def timed(source, algorithm, draws, seed, backend, reps):
    with use_backend(backend):
        sample_projective_many(source, 1, seed, algorithm)  # compile / warm caches
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            idx, _ = sample_projective_many(source, draws, seed, algorithm)
            times.append((time.perf_counter() - t0) / draws)
    return float(np.median(times)), idx


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--ks", default="16,32,64,128")
    ap.add_argument("--algorithms", default=",".join(ALGORITHMS))
    ap.add_argument("--draws", type=int, default=3, help="draws per timed batch")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)

    ks = [int(k) for k in args.ks.split(",")]
    rows = []
    mismatches = 0
    print(f"{'algorithm':>10} {'k':>5} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}  same")
    for alg in args.algorithms.split(","):
        for k in ks:
            source = make_source(args.n, k, alg, np.random.default_rng([args.seed, k]))
            t_jit, idx_jit = timed(source, alg, args.draws, args.seed, "numba", args.reps)
            t_py, idx_py = timed(source, alg, args.draws, args.seed, "numpy", args.reps)
            same = bool(np.array_equal(idx_jit, idx_py))
            mismatches += not same
            rows.append(
                {
                    "algorithm": alg,
                    "n": args.n,
                    "k": k,
                    "numba_s": t_jit,
                    "numpy_s": t_py,
                    "speedup": t_py / t_jit,
                    "identical": same,
                }
            )
            print(f"{alg:>10} {k:>5} {1e3 * t_jit:>10.3f} {1e3 * t_py:>10.3f} {t_py / t_jit:>8.2f}  {same}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return 1 if mismatches else 0


if __name__ == "__main__":
    sys.exit(main())
