"""Numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one JSON line per kernel with the best wall time of each path and
the largest absolute difference between their outputs.
"""
import argparse
import json
import timeit

import numpy as np

from ammrg import kernels
from ammrg._accel import HAVE_NUMBA


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def cases(rng):
    cam = rng.random((224, 224))
    a = rng.integers(0, 30, 400)
    b = rng.integers(0, 30, 400)
    pats = rng.standard_normal((1000, 768))
    q = pats[3] + 0.3 * rng.standard_normal(768)
    qs = pats[:14] + 0.3 * rng.standard_normal((14, 768))
    args = (4.0, kernels.MODE_CCCP, 0.01, 32, 1e-6)
    return {
        "patch_means": (kernels.patch_means_numpy, kernels.patch_means_numba, (cam, 16), lambda r: r),
        "lcs_length": (kernels.lcs_length_numpy, kernels.lcs_length_numba, (a, b), lambda r: r),
        "retrieve": (kernels.retrieve_numpy, kernels.retrieve_numba, (q, pats) + args, lambda r: r[0]),
        "retrieve_batch": (kernels.retrieve_batch_numpy, kernels.retrieve_batch_numba, (qs, pats) + args,
                           lambda r: r[0]),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(args.seed)
    for name, (np_fn, nb_fn, inputs, pick) in cases(rng).items():
        nb_fn(*inputs)  # compile outside the timed region
        diff = float(np.max(np.abs(np.asarray(pick(np_fn(*inputs)), dtype=float)
                                   - np.asarray(pick(nb_fn(*inputs)), dtype=float))))
        t_np = best_of(lambda: np_fn(*inputs), args.repeat)
        t_nb = best_of(lambda: nb_fn(*inputs), args.repeat)
        print(json.dumps({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "speedup": t_np / t_nb,
                          "max_abs_diff": diff}))


if __name__ == "__main__":
    main()
