from fractions import Fraction as F

import math
import pytest

from kmtcouple.exact import LatticePMF, make_walk_pmf
from kmtcouple.monotone import (
    abs_walk_pmf,
    chain_sample,
    comonotone_couple,
    gaussian_quantile_check,
    signed_couple_2s_4s,
    signed_coupling_margins,
)


def test_identical_marginals_give_diagonal():
    p = make_walk_pmf(6)
    t = comonotone_couple(p, p)
    assert t.check_marginals()
    assert t.joint == {(x, x): m for x, m in zip(p.atoms, p.masses)}


def test_point_mass_coupling():
    p = make_walk_pmf(3)
    t = comonotone_couple(LatticePMF.point(0), p)
    assert t.joint == {(0, x): m for x, m in zip(p.atoms, p.masses)}


def test_abs_walk_n2_pairs():
    t = comonotone_couple(abs_walk_pmf(2, 4), abs_walk_pmf(8, 2))
    got = {(int(a), int(b)): m for a, b, m in t.value_pairs()}
    want = {(0, 0): 70, (0, 2): 58, (4, 2): 54, (4, 4): 56, (4, 6): 16, (4, 8): 2}
    assert got == {k: F(v, 256) for k, v in want.items()}


def test_signed_coupling_n2():
    sc = signed_couple_2s_4s(2)
    assert sc.passed
    assert sc.table.check_marginals()
    # sign symmetry
    for (a, b), w in sc.signed.items():
        assert sc.signed[(-a, -b)] == w
    assert sum(sc.signed.values()) == 1


def test_signed_coupling_small_n_margins_match_table():
    sc = signed_couple_2s_4s(6)
    row = signed_coupling_margins(6)
    assert row["margin_upper"] == sc.margin_upper
    assert F(row["margin_diff"]) == sc.margin_diff


def test_gaussian_quantile_small_n():
    for n in (1, 2, 4, 10, 33):
        rep = gaussian_quantile_check(n)
        assert rep.margin_abs >= 0
        assert rep.margin_diff >= 0


def test_chain_sample():
    a = chain_sample(2, 1, seed=5)
    b = chain_sample(2, 1, seed=5)
    assert a.to_dict() == b.to_dict()
    assert all(s["ok"] for s in a.steps)
    for seed in range(20):
        tr = chain_sample(4, 3, seed=seed)
        signs = {math.copysign(1, z) for z in tr.Z if z != 0}
        assert len(signs) <= 1
        assert all(s["ok"] for s in tr.steps)


def test_chain_sample_validates():
    with pytest.raises(ValueError):
        chain_sample(3, 1, seed=0)
    with pytest.raises(ValueError):
        chain_sample(2, 0, seed=0)
