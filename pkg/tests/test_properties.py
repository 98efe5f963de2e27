import json
import math
from fractions import Fraction as F

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from kmtcouple.ep import build_dyadic_tree
from kmtcouple.exact import (
    LatticePMF,
    convolve,
    make_centered_binomial,
    make_hypergeometric,
    perturb_scale,
    quantile,
)
from kmtcouple.lemmas import alpha_beta_tables
from kmtcouple.monotone import comonotone_couple
from kmtcouple.report import dumps, format_float
from kmtcouple.rw import recursive_couple
from kmtcouple.stein import check_detailed_balance, stein_convolve, stein_from_pmf, stein_scale_perturb

weights = st.lists(st.integers(1, 50), min_size=1, max_size=8)
offsets = st.integers(-5, 5)


@st.composite
def pmfs(draw):
    w = draw(weights)
    return LatticePMF(F(draw(offsets)), tuple(w), sum(w))


@st.composite
def zero_mean_pmfs(draw):
    """Centered binomial or sample-sum laws (exact zero mean)."""
    if draw(st.booleans()):
        n = draw(st.integers(1, 12))
        p = F(draw(st.integers(1, n)), n) if n > 1 else F(1, 2)
        if p == 1:
            p = F(1, 2)
        if (n * p).denominator != 1:
            p = F(1, 2) if n % 2 == 0 else F(1, n)
        return make_centered_binomial(n, p)
    n = draw(st.integers(2, 12))
    k = draw(st.integers(1, n - 1))
    s = draw(st.sampled_from(range(-n + 2, n - 1, 2)))
    return make_hypergeometric(n, k, s, centered=True)


@given(pmfs())
def test_mass_conserved_and_positive(p):
    assert sum(p.masses) == 1
    assert all(m > 0 for m in p.masses)


@given(pmfs(), pmfs(), pmfs())
def test_convolve_commutative_associative(a, b, c):
    assert convolve(a, b) == convolve(b, a)
    assert convolve(convolve(a, b), c) == convolve(a, convolve(b, c))
    ab = convolve(a, b)
    assert ab.mean() == a.mean() + b.mean() and ab.variance() == a.variance() + b.variance()


@given(pmfs())
def test_perturb_scale_moments(p):
    q = perturb_scale(p)
    assert sum(q.masses) == 1
    assert q.mean() == 2 * p.mean() and q.variance() == 4 * p.variance() + F(1, 2)


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(st.just(2 * n), st.integers(1, 2 * n - 1))))
def test_balanced_sample_sum_symmetric(nk):
    n, k = nk
    p = make_hypergeometric(n, k, 0, centered=True)
    assert p.lo == -p.hi
    assert p.weights == p.weights[::-1]
    assert p.mean() == 0


@given(pmfs(), st.data())
def test_quantile_inverts_cdf(p, data):
    x = data.draw(st.sampled_from(p.atoms))
    u = p.cdf(x)
    if u < 1:
        assert quantile(p, u) == x
    lo_u = u - p.mass(x) + F(1, 10**9 * p.denom)
    assert quantile(p, lo_u) == x


@given(pmfs(), pmfs())
def test_comonotone_no_crossing(a, b):
    t = comonotone_couple(a, b)
    assert t.check_marginals()
    pairs = sorted((i, j) for i, j, _ in t.pairs)
    for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]):
        assert j1 <= j2
    assert sum(w for *_, w in t.pairs) == t.denom


@settings(max_examples=60)
@given(zero_mean_pmfs())
def test_stein_detailed_balance(p):
    T = stein_from_pmf(p)
    assert check_detailed_balance(T, p)
    assert all(v >= abs(x) for v, x in zip(T.values, T.atoms))
    # Stein identity with f(x) = x on the unit-step lattice: E[T(X)] = 2 Var X
    assert sum(m * v for m, v in zip(p.masses, T.values)) == 2 * p.variance()


@settings(max_examples=40)
@given(zero_mean_pmfs(), zero_mean_pmfs())
def test_stein_convolve_matches_direct(a, b):
    ab = convolve(a, b)
    assert stein_convolve(stein_from_pmf(a), a, stein_from_pmf(b), b) == stein_from_pmf(ab)


@settings(max_examples=40)
@given(zero_mean_pmfs())
def test_stein_scale_perturb_matches_direct(p):
    assert stein_scale_perturb(stein_from_pmf(p), p) == stein_from_pmf(perturb_scale(p))


@given(st.integers(1, 40))
def test_alpha_beta_pascal(m):
    t = alpha_beta_tables(m)
    assert sum(t.a) * 2 - t.a[0] == 1 << (2 * m)
    assert t.alpha_tail()[0] == sum(t.a)


@settings(max_examples=25)
@given(st.integers(1, 5000), st.integers(1, 8), st.integers(0, 10**6))
def test_ep_count_conservation(n, m, seed):
    tree = build_dyadic_tree(n, m, seed, refine=1)
    assert tree.check()
    for p in range(m + 1):
        assert tree.generation(p).sum() == n


@settings(max_examples=25)
@given(st.integers(1, 200).flatmap(lambda n: st.tuples(st.just(n), st.integers(-n, n).filter(lambda t: (t - n) % 2 == 0))),
       st.integers(0, 10**6))
def test_rw_path_valid(nt, seed):
    n, t = nt
    c = recursive_couple(n, t, seed)
    assert c.check()
    assert c.pathwise_violations == 0


finite = st.floats(allow_nan=False, allow_infinity=False)


@given(finite)
def test_float_text_roundtrip(x):
    assert float(format_float(x)) == x


json_vals = st.recursive(
    st.none() | st.booleans() | st.integers(-10**20, 10**20) | finite | st.text(max_size=5),
    lambda ch: st.lists(ch, max_size=4) | st.dictionaries(st.text(max_size=4), ch, max_size=4),
    max_leaves=12,
)


@given(json_vals)
def test_json_roundtrip(v):
    assert json.loads(dumps(v)) == v
    assert dumps(json.loads(dumps(v))) == dumps(v)
