"""Time the compiled kernels against their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--reps 200]

Both backends live in kmtcouple._kernels, so one process can time both;
the compiled versions are warmed up first so compilation is not counted.
"""

import argparse
import time

import numpy as np

from kmtcouple import _kernels as K
from kmtcouple._rng import derive_key, uniforms_np
from kmtcouple.ep import haar_scales


def _best(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(reps: int):
    u = uniforms_np(derive_key(1, 9), np.arange(200_000))
    Ns = np.full(u.size, 1001, dtype=np.int64)
    keys = np.array([derive_key(2, 9, r) for r in range(reps)], dtype=np.uint64)
    n_ep, m, r = 1024, 10, 2
    sc = haar_scales(m + r)
    n_rw = 1024
    A, B, H, _ = K.segment_plan(n_rw)

    return [
        ("ndtri (200k)", lambda: K.ndtri_np(u), ndtri_nb_vec(u)),
        ("binom_half_quantile N=1001 (200k)", lambda: K.binom_half_quantile_np(Ns, u), binom_nb_vec(Ns, u)),
        (f"ep_batch n={n_ep} x {reps}", lambda: K.ep_batch_np(n_ep, m, r, keys, sc),
         lambda: K.ep_batch_nb(n_ep, m, r, keys, sc)),
        (f"rw_batch bridge n={n_rw} x {reps}", lambda: K.rw_batch_np(n_rw, 0, keys, False, A, B, H),
         lambda: K.rw_batch_nb(n_rw, 0, keys, False, A, B, H)),
    ]


def ndtri_nb_vec(u):
    from numba import njit

    @njit(cache=False)
    def run(u):
        out = np.empty(u.size)
        for i in range(u.size):
            out[i] = K.ndtri_nb(u[i])
        return out

    return lambda: run(u)


def binom_nb_vec(Ns, u):
    from numba import njit

    @njit(cache=False)
    def run(Ns, u):
        out = np.empty(u.size, dtype=np.int64)
        for i in range(u.size):
            out[i] = K.binom_half_quantile_nb(Ns[i], u[i])
        return out

    return lambda: run(Ns, u)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()
    print(f"{'kernel':40s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for name, f_np, f_nb in cases(args.reps):
        f_nb()
        t_np, t_nb = _best(f_np), _best(f_nb)
        print(f"{name:40s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}")


if __name__ == "__main__":
    main()
