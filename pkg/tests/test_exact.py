from fractions import Fraction as F

import math
import pytest

from kmtcouple.exact import (
    InvalidParameter,
    LatticePMF,
    convolve,
    expect,
    frac_str,
    make_centered_binomial,
    make_hypergeometric,
    make_walk_pmf,
    parse_frac,
    perturb_scale,
    quantile,
    tail,
)


def test_walk_small_cases():
    s1 = make_walk_pmf(1)
    assert s1.atoms == (F(-1, 2), F(1, 2))
    assert s1.masses == (F(1, 2), F(1, 2))
    s2 = make_walk_pmf(2)
    assert s2.atoms == (-1, 0, 1)
    assert s2.masses == (F(1, 4), F(1, 2), F(1, 4))
    assert make_walk_pmf(4).masses == tuple(F(w, 16) for w in (1, 4, 6, 4, 1))


def test_centered_binomial():
    b = make_centered_binomial(2, F(1, 2))
    assert b.atoms == (-1, 0, 1) and b.masses == (F(1, 4), F(1, 2), F(1, 4))
    b = make_centered_binomial(4, F(1, 4))
    assert b.atoms == (-1, 0, 1, 2, 3)
    assert b.masses == tuple(F(w, 256) for w in (81, 108, 54, 12, 1))
    with pytest.raises(InvalidParameter):
        make_centered_binomial(3, F(1, 2))


def test_hypergeometric():
    h = make_hypergeometric(2, 1, 0, centered=True)
    assert h.atoms == (F(-1, 2), F(1, 2))
    assert h.masses == (F(1, 2), F(1, 2))
    raw = make_hypergeometric(4, 2, 0)
    # atoms count +1 draws, so S_2[4, 0] = 2 x - 2 lies on {-2, 0, 2}
    assert [2 * a - 2 for a in raw.atoms] == [-2, 0, 2]
    assert raw.masses == (F(1, 6), F(2, 3), F(1, 6))


def test_perturb_scale():
    pt = perturb_scale(LatticePMF.point(0))
    assert pt.atoms == (-1, 0, 1) and pt.masses == (F(1, 4), F(1, 2), F(1, 4))
    y = perturb_scale(make_walk_pmf(1))
    assert y.atoms == (-2, -1, 0, 1, 2)
    assert y.masses == (F(1, 8), F(1, 4), F(1, 4), F(1, 4), F(1, 8))
    x = make_walk_pmf(2)
    y = perturb_scale(x)
    for xv in x.atoms:
        assert y.mass(2 * xv - 1) == (x.mass(xv) + x.mass(xv - 1)) / 4
        assert y.mass(2 * xv) == x.mass(xv) / 2
    assert y.masses[:2] == (F(1, 16), F(1, 8))


def test_convolve():
    s1 = make_walk_pmf(1)
    assert convolve(s1, s1).atoms == make_walk_pmf(2).atoms
    assert convolve(s1, s1).masses == make_walk_pmf(2).masses
    p = make_walk_pmf(5)
    assert convolve(LatticePMF.point(0), p).masses == p.masses
    u = LatticePMF.from_masses(-1, [F(1, 3)] * 3)
    uu = convolve(u, u)
    assert uu.offset == -2
    assert uu.masses == tuple(F(w, 9) for w in (1, 2, 3, 2, 1))


def test_tail():
    s2 = make_walk_pmf(2)
    assert tail(s2).at(1) == F(1, 4)
    assert tail(s2).at(-1) == 1
    assert tail(make_walk_pmf(4)).at(1) == F(5, 16)


def test_expect():
    assert expect(make_walk_pmf(7), "moment", r=1) == 0
    assert expect(make_walk_pmf(4), "moment", r=2) == 1
    assert expect(make_walk_pmf(6), "abs-exp", theta=0.0) == 1.0
    v = expect(make_walk_pmf(2), "abs-exp", theta=0.5)
    assert v == pytest.approx(0.5 + 0.5 * math.exp(0.5), rel=1e-15)


def test_quantile():
    s2 = make_walk_pmf(2)
    assert quantile(s2, F(1, 2)) == 0
    assert quantile(s2, F(9, 10)) == 1
    assert quantile(s2, F(1, 10)) == -1
    with pytest.raises(InvalidParameter):
        quantile(s2, 1)


def test_fraction_strings_and_dict_roundtrip():
    assert frac_str(F(3, 4)) == "3/4" and frac_str(F(2)) == "2/1"
    assert parse_frac("-5/6") == F(-5, 6)
    h = make_hypergeometric(10, 4, 2, centered=True)
    assert LatticePMF.from_dict(h.to_dict()) == h


def test_rejects_zero_weights():
    with pytest.raises(InvalidParameter):
        LatticePMF(0, (1, 0, 1), 2)
    with pytest.raises(InvalidParameter):
        LatticePMF(0, (1, 1), 3)
