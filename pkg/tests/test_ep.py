import math

import numpy as np
import pytest
from scipy import stats

from kmtcouple.ep import (
    build_dyadic_tree,
    chi2_tail_rows,
    depth_for,
    deviation_stats,
    ep_samples,
    extract_paths,
    run_ep_experiment,
)
from kmtcouple.exact import InvalidParameter
from kmtcouple.monotone import CapabilityError


def _schauder(z, G, t):
    """W_0(t) = sum over nodes of Z(I) phi_I(t), phi_I the tent of height
    2^{-p/2-1} on I = [k 2^-p, (k+1) 2^-p]."""
    W = np.zeros_like(t)
    for p in range(G):
        for k in range(1 << p):
            a, b = k / (1 << p), (k + 1) / (1 << p)
            mid = 0.5 * (a + b)
            h = 2.0 ** (-p / 2 - 1)
            tent = np.where((t >= a) & (t <= mid), (t - a) / (mid - a), 0.0)
            tent += np.where((t > mid) & (t <= b), (b - t) / (b - mid), 0.0)
            W += z[(1 << p) + k] * h * tent
    return W


def test_single_point():
    tree = build_dyadic_tree(1, 4, seed=3)
    assert tree.check()
    for p in range(5):
        assert tree.generation(p).sum() == 1
        assert set(tree.generation(p)) <= {0, 1}


def test_conservation_and_empty_subtrees():
    tree = build_dyadic_tree(37, 6, seed=1, rep=2)
    assert tree.check()
    c = tree.counts
    for h in range(1, 1 << 6):
        if c[h] == 0:
            assert c[2 * h] == 0 and c[2 * h + 1] == 0
    assert tree.generation(6).sum() == 37


def test_paths_pinned_and_midpoint():
    n = 100
    tree = build_dyadic_tree(n, 1, seed=4)
    t, Gn, W = extract_paths(tree)
    assert list(t) == [0.0, 0.5, 1.0]
    assert Gn[0] == 0 and Gn[-1] == 0 and W[0] == 0 and W[-1] == 0
    assert W[1] == pytest.approx(tree.z[1] / 2, abs=1e-15)
    assert Gn[1] == pytest.approx((tree.counts[2] - n / 2) / math.sqrt(n), abs=1e-15)


def test_bridge_matches_schauder_series_on_grid():
    tree = build_dyadic_tree(50, 4, seed=9, refine=2)
    t, _, W = extract_paths(tree)
    assert np.allclose(W, _schauder(tree.z, 6, t), atol=1e-12)
    # the coarser series already gives the exact values at generation-4 points
    assert np.allclose(W, _schauder(tree.z, 4, t), atol=1e-12)


def test_deviation_stats_independent():
    n, m = 200, 7
    tree = build_dyadic_tree(n, m, seed=5, rep=1)
    st = deviation_stats(tree)
    t, Gn, W = extract_paths(tree)
    cum = np.concatenate(([0], np.cumsum(tree.generation(m))))
    D = np.max(np.abs(cum - n * t - math.sqrt(n) * W))
    assert st.D_n == pytest.approx(D, rel=1e-12)
    # chi-square statistic: max over leaves of the sum of Z^2 along ancestors
    best = 0.0
    for leaf in range(1 << m, 2 << m):
        h, s = leaf, 0.0
        while h >= 1:
            s += tree.z[h] ** 2
            h //= 2
        best = max(best, s)
    assert st.chi2max == pytest.approx(best, rel=1e-12)
    assert st.delta_Gn >= 0 and st.delta_W0 >= 0


def test_node_quantile_inequalities():
    for rep in range(10):
        tree = build_dyadic_tree(500, 9, seed=2, rep=rep)
        h = np.arange(1, 1 << 9)
        N = tree.counts[h]
        nh = tree.nhat()
        z = tree.z[h]
        ok = N >= 1
        assert np.all(np.abs(nh[ok]) <= np.abs(z[ok]) * np.sqrt(N[ok]) + 3 + 1e-9)
        assert np.all(np.abs(nh[ok] - z[ok] * np.sqrt(N[ok])) <= z[ok] ** 2 + 11 + 1e-9)
        assert deviation_stats(tree).node_violations == 0


def test_first_split_is_binomial():
    n, reps = 1024, 2000
    X = ep_samples(n, reps, seed=12, m=10)
    split = X[:, 5].astype(int)
    edges = np.arange(n // 2 - 40, n // 2 + 41, 5)
    obs = np.histogram(split, bins=np.concatenate(([-1], edges, [n + 1])))[0]
    cdf = stats.binom.cdf(np.concatenate(([-1], edges, [n + 1])) - 1, n, 0.5)
    exp = np.diff(cdf) * reps
    keep = exp >= 5
    obs2 = np.append(obs[keep], obs[~keep].sum())
    exp2 = np.append(exp[keep], exp[~keep].sum())
    if exp2[-1] < 5:
        obs2[-2] += obs2[-1]
        exp2[-2] += exp2[-1]
        obs2, exp2 = obs2[:-1], exp2[:-1]
    p = stats.chisquare(obs2, exp2 * obs2.sum() / exp2.sum()).pvalue
    assert p > 0.001


def test_reproducible_and_job_independent():
    a = ep_samples(300, 30, seed=7, m=8, jobs=1)
    b = ep_samples(300, 30, seed=7, m=8, jobs=2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, ep_samples(300, 30, seed=8, m=8))


def test_depth_rules_and_limits():
    assert depth_for(1000) == 10 and depth_for(1000, "floor_log2") == 9 and depth_for(1000, 5) == 5
    with pytest.raises(InvalidParameter):
        depth_for(10, "bogus")
    with pytest.raises(CapabilityError):
        build_dyadic_tree(10, 30, seed=0)


def test_chi2_tail_rows():
    rows = chi2_tail_rows(np.zeros(100), 5)
    assert all(r["pass"] and r["empirical"] == 0 for r in rows)
    assert rows[1]["bound"] == pytest.approx(2 * math.exp(-6))


def test_small_experiment():
    with pytest.raises(InvalidParameter):
        run_ep_experiment([64], 50, seed=1)
    res = run_ep_experiment([64, 128], 100, seed=1)
    assert res["node_violations"] == 0
    assert len(res["rows"]) == 200
    assert res["fit_mean_D_vs_log_n"] is not None
