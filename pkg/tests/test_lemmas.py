from fractions import Fraction as F

import math

from kmtcouple.lemmas import (
    LemmaReport,
    alpha_beta_tables,
    check_ash_sandwich,
    check_entropy_bound,
    check_mass_domination,
    check_ratio_monotonicity,
    check_shifted_domination,
    check_tail_domination,
    entropy_D,
    entropy_Q,
)


def _alpha(m, k):
    return F(math.comb(2 * m, m + k), 4**m)


def _beta(m, k):
    return F(math.comb(8 * m + 1, 4 * m + 2 * k), 2 ** (8 * m))


def test_alpha_beta_values():
    assert _alpha(1, 1) == F(1, 4)
    assert _beta(1, 1) == F(21, 64)
    assert _alpha(2, 2) == F(1, 16)
    t = alpha_beta_tables(3)
    for k in range(1, 4):
        assert F(t.a[k], 4**3) == _alpha(3, k)
    for k in range(1, 7):
        assert F(t.b[k], 2**24) == _beta(3, k)


def test_mass_domination_examples():
    assert _alpha(2, 1) <= _beta(2, 1) == F(19448, 65536)
    assert _alpha(2, 2) <= _beta(2, 2) == F(6188, 65536)
    rep = check_mass_domination(20)
    assert rep.passed and rep.violation_count == 0


def test_shifted_domination():
    assert _alpha(3, 1) == F(15, 64)
    assert _beta(3, 2) == F(2042975, 16777216)
    rep = check_shifted_domination(30)
    assert rep.passed
    assert rep.extra["special_case_pairs_checked"] > 0


def test_ratio_and_tail():
    assert check_ratio_monotonicity(20, 6).passed
    rep = check_tail_domination(40)
    assert rep.passed
    assert rep.threshold is not None
    # part 1 at m = 1: 1/4 <= P(S_8 >= 2) = 93/256
    assert F(1, 4) <= F(sum(math.comb(8, j) for j in range(5, 9)), 256) == F(93, 256)


def test_threshold_stable_when_range_grows():
    a = check_tail_domination(30).threshold
    b = check_tail_domination(60).threshold
    assert b >= a


def test_entropy_values():
    assert entropy_Q(0.0) == 0.0
    assert math.isclose(entropy_Q(1.0), 3 * math.log(2), rel_tol=1e-12)
    assert math.isclose(entropy_D(0.75), 0.130812, abs_tol=1e-6)
    assert entropy_Q(0.5) >= 0.1875
    assert math.isclose(entropy_Q(0.5), 0.2069, abs_tol=1e-4)
    assert check_entropy_bound(2000).passed


def test_ash_sandwich():
    assert check_ash_sandwich(60).passed


def test_report_roundtrip():
    rep = check_mass_domination(5)
    assert LemmaReport.from_dict(rep.to_dict()).to_dict() == rep.to_dict()
