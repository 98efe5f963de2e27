"""Dyadic coupling of the uniform empirical process with a Brownian bridge.

Counts are split down the dyadic tree: a node I with N(I) points draws one
uniform u, sets Z(I) = Phi^{-1}(u) and N(I') = F^{-1}_{Bin(N(I), 1/2)}(u), so
N^(I) = 2 N(I') - N(I) is quantile-coupled to Z(I). The same Z(I) are the
Haar coefficients of the bridge W_0, so both paths live on one tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _kernels as K
from ._jit import BACKEND, USE_NUMBA
from ._parallel import ordered_map
from ._rng import derive_key
from .exact import InvalidParameter
from .monotone import CapabilityError

MAX_TREE_NODES = 1 << 24
DEFAULT_REFINE = 2
CHI2_X = (0, 1, 2)
STREAM_EP = 1


def depth_for(n: int, rule="ceil_log2") -> int:
    if isinstance(rule, int):
        return rule
    if rule == "ceil_log2":
        return max(1, math.ceil(math.log2(n)))
    if rule == "floor_log2":
        return max(1, int(math.floor(math.log2(n))))
    raise InvalidParameter(f"unknown depth rule {rule!r}")


def haar_scales(G: int) -> np.ndarray:
    """Value 2^{-p/2 - 1} of the integrated Haar function phi_I at the
    midpoint of a generation-p interval."""
    return 2.0 ** (-0.5 * np.arange(G) - 1.0)


@dataclass(frozen=True)
class DyadicTree:
    """Heap-indexed tree: node h = 2^p + k is [k 2^-p, (k+1) 2^-p].
    ``counts`` covers generations 0..m; ``z`` covers 0..m+refine-1 (the
    extra generations only refine W_0 between grid points)."""

    n: int
    m: int
    refine: int
    counts: np.ndarray
    z: np.ndarray

    def generation(self, p: int) -> np.ndarray:
        return self.counts[1 << p:2 << p]

    def nhat(self) -> np.ndarray:
        """N^(I) = N(I') - N(I'') for the internal nodes, heap order from 1."""
        h = np.arange(1, 1 << self.m)
        return 2 * self.counts[2 * h] - self.counts[h]

    def check(self) -> bool:
        h = np.arange(1, 1 << self.m)
        c = self.counts
        return bool(
            c[1] == self.n
            and np.all(c >= 0)
            and np.all(c[2 * h] + c[2 * h + 1] == c[h])
            and np.all(np.abs(self.nhat()) <= c[h])
        )


def _check_args(n, m, refine):
    if n < 1 or m < 1:
        raise InvalidParameter("need n >= 1 and depth m >= 1")
    if refine < 1:
        raise InvalidParameter("refine must be at least 1 (the chi-square statistic uses generation m)")
    if (1 << (m + refine)) > MAX_TREE_NODES:
        raise CapabilityError(f"depth {m} + {refine} exceeds the node cap {MAX_TREE_NODES}")


def tree_key(seed: int, n: int, rep: int) -> int:
    return derive_key(seed, STREAM_EP, n, rep)


def build_dyadic_tree(n: int, m: int, seed: int, rep: int = 0, refine: int = DEFAULT_REFINE) -> DyadicTree:
    _check_args(n, m, refine)
    key = tree_key(seed, n, rep)
    if USE_NUMBA:
        counts, z = K.ep_tree_nb(n, m, refine, np.uint64(key))
    else:
        counts, z = K.ep_tree_np(n, m, refine, key)
    return DyadicTree(n, m, refine, counts, z)


def extract_paths(tree: DyadicTree):
    """(t, G_n(t), W_0(t)) on T(m) = {k 2^-m}."""
    G = tree.m + tree.refine
    W = K.ep_bridge_np(tree.z, G, haar_scales(G))[:: 1 << tree.refine]
    cells = 1 << tree.m
    t = np.arange(cells + 1) / cells
    cum = np.concatenate(([0], np.cumsum(tree.generation(tree.m))))
    Gn = (cum - tree.n * t) / math.sqrt(tree.n)
    return t, Gn, W


@dataclass(frozen=True)
class DeviationStats:
    """D_n = max over T(m) of sqrt(n)|G_n - W_0|; delta_Gn bounds the
    within-cell oscillation of G_n by (max cell count + n 2^-m)/sqrt(n);
    delta_W0 is the oscillation of W_0 within cells, resolved on the
    generation m + refine grid; chi2max = max_t S_m(t)."""

    n: int
    m: int
    D_n: float
    delta_Gn: float
    delta_W0: float
    chi2max: float
    node_violations: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def deviation_stats(tree: DyadicTree) -> DeviationStats:
    G = tree.m + tree.refine
    args = (tree.n, tree.m, tree.refine, tree.counts, tree.z, haar_scales(G))
    d, g, w, c, b = K.ep_stats_nb(*args) if USE_NUMBA else K.ep_stats_np(*args)
    return DeviationStats(tree.n, tree.m, float(d), float(g), float(w), float(c), int(b))


def _batch(job):
    n, m, refine, seed, lo, hi = job
    keys = np.array([tree_key(seed, n, r) for r in range(lo, hi)], dtype=np.uint64)
    scales = haar_scales(m + refine)
    if USE_NUMBA:
        return K.ep_batch_nb(n, m, refine, keys, scales)
    return K.ep_batch_np(n, m, refine, keys, scales)


def ep_samples(n: int, reps: int, seed: int, m: int, refine: int = DEFAULT_REFINE, jobs: int = 1) -> np.ndarray:
    """Per-replicate rows (D_n, delta_Gn, delta_W0, chi2max, node
    violations, N(I') at generation 1)."""
    _check_args(n, m, refine)
    chunk = max(1, -(-reps // max(1, jobs)))
    jobs_list = [(n, m, refine, seed, lo, min(reps, lo + chunk)) for lo in range(0, reps, chunk)]
    parts = ordered_map(_batch, jobs_list, jobs)
    return np.concatenate(parts) if parts else np.zeros((0, 6))


def linear_fit(x, y) -> dict:
    res = stats.linregress(np.asarray(x, float), np.asarray(y, float))
    return {"intercept": float(res.intercept), "slope": float(res.slope), "r2": float(res.rvalue**2)}


def chi2_tail_rows(chi2max: np.ndarray, m: int) -> list:
    rows = []
    R = len(chi2max)
    for x in CHI2_X:
        level = 10.0 * (m + x)
        p = float(np.mean(chi2max >= level))
        se = math.sqrt(p * (1.0 - p) / R)
        bound = 2.0 * math.exp(-m - x)
        rows.append({"x": x, "level": level, "empirical": p, "se": se, "bound": bound, "pass": p <= bound + 3.0 * se})
    return rows


def run_ep_experiment(n_list, reps: int, seed: int, depth_rule="ceil_log2", refine: int = DEFAULT_REFINE, jobs: int = 1,
                      min_reps: int = 100) -> dict:
    """Per-n summaries, chi-square tail checks and the fit of mean D_n
    against log n (judged only when at least two n are given)."""
    if reps < min_reps or reps < 1:
        raise InvalidParameter(f"reps must be at least {min_reps}")
    n_list = sorted(int(n) for n in n_list)
    per_n, rows = [], []
    for n in n_list:
        m = depth_for(n, depth_rule)
        X = ep_samples(n, reps, seed, m, refine, jobs)
        D = X[:, 0]
        tails = chi2_tail_rows(X[:, 3], m)
        per_n.append(
            {
                "n": n,
                "m": m,
                "mean_D_n": float(D.mean()),
                "sd_D_n": float(D.std(ddof=1)),
                "q50_D_n": float(np.quantile(D, 0.5)),
                "q90_D_n": float(np.quantile(D, 0.9)),
                "q99_D_n": float(np.quantile(D, 0.99)),
                "mean_delta_Gn": float(X[:, 1].mean()),
                "mean_delta_W0": float(X[:, 2].mean()),
                "mean_chi2max": float(X[:, 3].mean()),
                "chi2_tail": tails,
                "node_violations": int(X[:, 4].sum()),
                "mean_D_over_log_n": float(D.mean() / math.log(n)),
            }
        )
        for r in range(reps):
            rows.append({"n": n, "rep": r, "D_n": float(X[r, 0]), "delta_Gn": float(X[r, 1]),
                         "delta_W0": float(X[r, 2]), "chi2max": float(X[r, 3])})
    means = [p["mean_D_n"] for p in per_n]
    fit = linear_fit([math.log(n) for n in n_list], means) if len(n_list) >= 2 else None
    monotone = all(a <= b for a, b in zip(means, means[1:]))
    tails_ok = all(t["pass"] for p in per_n for t in p["chi2_tail"])
    viol = sum(p["node_violations"] for p in per_n)
    return {
        "experiment": "empirical_process_embedding",
        "backend": BACKEND,
        "seed": seed,
        "reps": reps,
        "depth_rule": depth_rule,
        "refine": refine,
        "per_n": per_n,
        "fit_mean_D_vs_log_n": fit,
        "mean_D_nondecreasing": monotone,
        "max_mean_D_over_log_n": max(p["mean_D_over_log_n"] for p in per_n),
        "chi2_tail_pass": tails_ok,
        "node_violations": viol,
        "pass": bool(tails_ok and viol == 0 and (fit is None or (monotone and fit["r2"] >= 0.95))),
        "rows": rows,
    }
