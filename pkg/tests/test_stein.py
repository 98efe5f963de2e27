from fractions import Fraction as F

import pytest

from kmtcouple.exact import (
    InvalidParameter,
    LatticePMF,
    convolve,
    make_centered_binomial,
    make_hypergeometric,
    make_walk_pmf,
    perturb_scale,
)
from kmtcouple.stein import (
    check_detailed_balance,
    stein_binomial,
    stein_binomial_scaled,
    stein_convolve,
    stein_crossvalidate,
    stein_from_pmf,
    stein_hypergeometric,
    stein_hypergeometric_scaled,
    stein_scale_perturb,
)

UNIFORM3 = LatticePMF.from_masses(-1, [F(1, 3)] * 3)


def test_general_formula_examples():
    assert stein_from_pmf(UNIFORM3).values == (1, 2, 1)
    assert set(stein_from_pmf(make_centered_binomial(4, F(1, 2))).values) == {2}
    assert stein_from_pmf(make_walk_pmf(1)).values == (F(1, 2), F(1, 2))


def test_off_support_convention():
    T = stein_from_pmf(UNIFORM3)
    assert T.at(5) == 5 and T.at(-3) == 3 and T.at(0) == 2


def test_requires_zero_mean():
    with pytest.raises(InvalidParameter):
        stein_from_pmf(LatticePMF.from_masses(0, [F(1, 2), F(1, 2)]))


def test_closed_forms():
    assert set(stein_binomial(4, F(1, 2)).values) == {2}
    T = stein_hypergeometric(2, 1, 0)
    assert T.values == (F(1, 2), F(1, 2))
    p = F(1, 4)
    assert stein_binomial(4, p) == stein_from_pmf(make_centered_binomial(4, p))


def test_detailed_balance():
    for pmf in (UNIFORM3, make_walk_pmf(9), make_hypergeometric(12, 5, 4, centered=True)):
        assert check_detailed_balance(stein_from_pmf(pmf), pmf)


def test_convolution_examples():
    Tu = stein_from_pmf(UNIFORM3)
    Tz = stein_convolve(Tu, UNIFORM3, Tu, UNIFORM3)
    assert Tz.at(0) == F(8, 3) and Tz.at(2) == 2 and Tz.at(-2) == 2
    pt = LatticePMF.point(0)
    X = make_walk_pmf(5)
    assert stein_convolve(stein_from_pmf(X), X, stein_from_pmf(pt), pt) == stein_from_pmf(X)
    s2 = make_walk_pmf(2)
    T2 = stein_from_pmf(s2)
    assert set(stein_convolve(T2, s2, T2, s2).values) == {2}


def test_scaling_examples():
    X = make_centered_binomial(2, F(1, 2))
    TY = stein_scale_perturb(stein_from_pmf(X), X)
    assert TY.at(0) == 5 and TY.at(1) == F(17, 3)
    assert TY.values[0] == abs(TY.offset) and TY.values[-1] == TY.offset + len(TY) - 1
    X4 = make_centered_binomial(4, F(1, 2))
    T4 = stein_scale_perturb(stein_from_pmf(X4), X4)
    assert all(T4.at(y) == 9 for y in range(-4, 5, 2))


def test_scaled_closed_forms():
    for n, p in ((4, F(1, 2)), (6, F(1, 3)), (5, F(2, 5))):
        X = make_centered_binomial(n, p)
        assert stein_binomial_scaled(n, p) == stein_from_pmf(perturb_scale(X))
    for n, k, s in ((8, 3, 2), (10, 5, 0), (9, 4, -3)):
        X = make_hypergeometric(n, k, s, centered=True)
        assert stein_hypergeometric_scaled(n, k, s) == stein_from_pmf(perturb_scale(X))


def test_convolution_matches_general_formula():
    X = make_hypergeometric(10, 4, 2, centered=True)
    Y = make_centered_binomial(6, F(1, 3))
    Tz = stein_convolve(stein_from_pmf(X), X, stein_from_pmf(Y), Y)
    assert Tz == stein_from_pmf(convolve(X, Y))


def test_crossvalidate_small_corpus():
    res = stein_crossvalidate(12)
    assert res["pass"]
    assert res["binomial"]["instances"]["convolution"] > 0
    assert res["hypergeometric"]["instances"]["closed"] == sum(
        (n - 1) * (n - 1) for n in range(2, 13)
    )
