"""Counter-based RNG, quantile kernels and agreement of the two backends."""

import math
import os
import subprocess
import sys
from fractions import Fraction as F

import numpy as np
import pytest
from scipy.special import ndtri

from kmtcouple import _kernels as K
from kmtcouple._jit import HAVE_NUMBA
from kmtcouple._rng import derive_key, uniform_py, uniforms_np
from kmtcouple.ep import haar_scales
from kmtcouple.exact import binomial_row, hypergeometric_weights

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def test_largest_grid_uniform_below_one():
    top = ((2**52 - 1) + 0.5) * 2.0**-52
    assert top < 1.0 and K.ndtri_np(np.array([top]))[0] < 9


def test_uniforms_open_interval_and_vectorized():
    key = derive_key(3, 1, 2)
    u = uniforms_np(key, np.arange(1000))
    assert np.all((u > 0) & (u < 1))
    assert [uniform_py(key, c) for c in range(5)] == list(u[:5])
    assert abs(u.mean() - 0.5) < 0.05


def test_derive_key_separates_streams():
    keys = {derive_key(0, a, b) for a in range(20) for b in range(20)}
    assert len(keys) == 400
    assert derive_key(1, 2) != derive_key(2, 1)
    with pytest.raises(ValueError):
        derive_key(-1)


@needs_numba
def test_uniform_backends_agree():
    key = derive_key(9, 9)
    u = uniforms_np(key, np.arange(50))
    assert all(K.uniform_nb(np.uint64(key), c) == u[c] for c in range(50))


def test_ndtri_matches_scipy():
    u = uniforms_np(derive_key(5), np.arange(20000))
    u = np.concatenate([u, [1e-300, 1e-20, 0.5, 1 - 1e-16]])
    ref = ndtri(u)
    ours = K.ndtri_np(u)
    assert np.max(np.abs(ours - ref) / np.maximum(1, np.abs(ref))) < 1e-14
    if HAVE_NUMBA:
        nb = np.array([K.ndtri_nb(x) for x in u])
        assert np.allclose(nb, ours, rtol=1e-15, atol=1e-15)


def _exact_quantile(weights, denom, u):
    """Smallest index with cumulative weight / denom >= u, in rationals."""
    uf = F(u)
    acc = 0
    for i, w in enumerate(weights):
        acc += w
        if F(acc, denom) >= uf:
            return i
    return len(weights) - 1


def test_binomial_quantile_exact():
    rng = np.random.default_rng(1)
    for N in (1, 2, 3, 7, 20, 61):
        row = binomial_row(N)
        u = rng.random(200)
        ours = K.binom_half_quantile_np(np.full(u.size, N), u)
        want = [_exact_quantile(row, 2**N, x) for x in u]
        assert list(ours) == want
        if HAVE_NUMBA:
            assert [K.binom_half_quantile_nb(N, x) for x in u] == want


def test_hypergeometric_quantile_exact():
    rng = np.random.default_rng(2)
    for n, K_, k in ((2, 1, 1), (10, 5, 4), (12, 7, 6), (40, 20, 13), (64, 40, 30)):
        lo, w, d = hypergeometric_weights(n, k, 2 * K_ - n)
        u = rng.random(200)
        ours = K.hyper_quantile_np(n, K_, k, u)
        want = [lo + _exact_quantile(w, d, x) for x in u]
        assert list(ours) == want
        if HAVE_NUMBA:
            assert [K.hyper_quantile_nb(n, K_, k, x) for x in u] == want


def test_quantile_extreme_grid_levels():
    # the uniforms live on (j + 1/2) 2^-52, so 2^-53 and 1 - 2^-53 are the extremes
    N = 1001
    row = binomial_row(N)
    assert 1 - 2.0**-53 < 1.0
    for u in (2.0**-53, 1e-12, 0.5, 1 - 1e-12, 1 - 2.0**-53):
        want = _exact_quantile(row, 2**N, u)
        assert int(K.binom_half_quantile_np(N, u)) == want
        if HAVE_NUMBA:
            assert K.binom_half_quantile_nb(N, u) == want


@needs_numba
@pytest.mark.parametrize("n,m", [(1, 1), (7, 3), (256, 8), (1000, 10)])
def test_ep_tree_backends_agree(n, m):
    key = derive_key(11, 1, n, 0)
    c1, z1 = K.ep_tree_nb(n, m, 2, np.uint64(key))
    c2, z2 = K.ep_tree_np(n, m, 2, key)
    # counts are exact; normals may differ in the last bit (different libm)
    assert np.array_equal(c1, c2)
    assert np.allclose(z1, z2, rtol=1e-14, atol=1e-14)
    sc = haar_scales(m + 2)
    assert np.allclose(K.ep_bridge_nb(z1, m + 2, sc), K.ep_bridge_np(z1, m + 2, sc), rtol=1e-13, atol=1e-13)
    s1 = K.ep_stats_nb(n, m, 2, c1, z1, sc)
    s2 = K.ep_stats_np(n, m, 2, c2, z2, sc)
    assert np.allclose(s1, s2, rtol=1e-13, atol=1e-13)


@needs_numba
def test_ep_batch_backends_agree():
    keys = np.array([derive_key(4, 1, 300, r) for r in range(12)], dtype=np.uint64)
    sc = haar_scales(11)
    a = K.ep_batch_nb(300, 9, 2, keys, sc)
    b = K.ep_batch_np(300, 9, 2, keys, sc)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-13)


@needs_numba
@pytest.mark.parametrize("n,t,full", [(1, 1, False), (5, -1, False), (64, 0, False), (100, 10, False), (128, 0, True)])
def test_rw_backends_agree(n, t, full):
    A, B, H, _ = K.segment_plan(n)
    keys = np.array([derive_key(8, 2, n, r) for r in range(10)], dtype=np.uint64)
    a = K.rw_batch_nb(n, t, keys, full, A, B, H)
    b = K.rw_batch_np(n, t, keys, full, A, B, H)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_segment_plan_covers_path():
    for n in (1, 5, 6, 17, 100):
        A, B, H, D = K.segment_plan(n)
        assert A[0] == 0 and B[0] == n
        base = [(a, b) for a, b in zip(A, B) if b - a <= K.BASE_MAX]
        covered = sorted(base)
        assert covered[0][0] == 0 and covered[-1][1] == n
        assert all(x[1] == y[0] for x, y in zip(covered, covered[1:]))


def test_env_flag_selects_numpy_backend():
    code = (
        "from kmtcouple._jit import BACKEND; from kmtcouple.ep import ep_samples;"
        "import numpy as np; x = ep_samples(64, 5, 3, 6); print(BACKEND, repr(float(x.sum())))"
    )
    env = dict(os.environ, KMTC_DISABLE_NUMBA="1")
    out_np = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out_np.stdout.split()[0] == "numpy"
    if HAVE_NUMBA:
        env["KMTC_DISABLE_NUMBA"] = "0"
        out_nb = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        assert out_nb.stdout.split()[0] == "numba"
        assert math.isclose(float(out_np.stdout.split()[1]), float(out_nb.stdout.split()[1]), rel_tol=1e-12)
