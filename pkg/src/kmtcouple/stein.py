"""Stein coefficients of zero-mean lattice laws.

For a zero-mean law alpha on a segment S, the Stein coefficient T makes the
nearest-neighbour chain with rates T(i) - i (up) and T(i) + i (down)
reversible for alpha. It is given on S by

    T(i) = i + (2 / alpha(i)) * sum_{j > i} alpha(j) j

and by the convention T(i) = |i| off the support.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .exact import (
    InvalidParameter,
    LatticePMF,
    _as_fraction,
    convolve,
    frac_str,
    make_centered_binomial,
    make_hypergeometric,
    perturb_scale,
)


@dataclass(frozen=True)
class SteinCoefficient:
    offset: Fraction
    values: tuple

    def __len__(self):
        return len(self.values)

    @property
    def atoms(self) -> tuple:
        return tuple(self.offset + i for i in range(len(self.values)))

    def at(self, x) -> Fraction:
        x = _as_fraction(x)
        j = x - self.offset
        if j.denominator == 1 and 0 <= j < len(self.values):
            return self.values[int(j)]
        return abs(x)

    def rates(self):
        """Up and down rates T(i) - i and T(i) + i on the support."""
        up = tuple(t - x for t, x in zip(self.values, self.atoms))
        down = tuple(t + x for t, x in zip(self.values, self.atoms))
        return up, down

    def to_dict(self) -> dict:
        return {"offset": frac_str(self.offset), "values": [frac_str(v) for v in self.values]}


def _check_zero_mean(pmf: LatticePMF):
    o = pmf.offset
    s = sum(w * (o.numerator + i * o.denominator) for i, w in enumerate(pmf.weights))
    if s != 0:
        raise InvalidParameter("a Stein coefficient exists only for zero-mean laws")


def stein_from_pmf(pmf: LatticePMF) -> SteinCoefficient:
    _check_zero_mean(pmf)
    o = pmf.offset
    on, od = o.numerator, o.denominator
    w = pmf.weights
    L = len(w)
    vals = [None] * L
    acc = 0  # od * sum_{j > i} w_j x_j
    for i in range(L - 1, -1, -1):
        vals[i] = o + i + Fraction(2 * acc, od * w[i])
        acc += w[i] * (on + i * od)
    return SteinCoefficient(o, tuple(vals))


def check_detailed_balance(T: SteinCoefficient, pmf: LatticePMF) -> bool:
    """alpha(i)(T(i) - i) = alpha(i+1)(T(i+1) + i + 1) for all i, including
    the two boundary equations."""
    if T.offset != pmf.offset or len(T) != len(pmf):
        return False
    w = pmf.weights
    xs = pmf.atoms
    if T.values[0] != -xs[0] or T.values[-1] != xs[-1]:
        return False
    for i in range(len(w) - 1):
        if w[i] * (T.values[i] - xs[i]) != w[i + 1] * (T.values[i + 1] + xs[i + 1]):
            return False
    return True


def stein_binomial(n: int, p) -> SteinCoefficient:
    """Closed form 2pqn + (q - p)x for the centered Binomial(n, p)."""
    p = _as_fraction(p)
    q = 1 - p
    pmf = make_centered_binomial(n, p)
    vals = tuple(2 * p * q * n + (q - p) * x for x in pmf.atoms)
    return SteinCoefficient(pmf.offset, vals)


def stein_hypergeometric(n: int, k: int, s: int) -> SteinCoefficient:
    """Closed form for the centered half-lattice sample sum of k draws from
    an urn of n coupons with sum s:
    T(x) = 2pq k(n-k)/n + 2x^2/n + (q-p)(n-2k)x/n with p = (n+s)/(2n)."""
    pmf = make_hypergeometric(n, k, s, centered=True)
    p = Fraction(n + s, 2 * n)
    q = 1 - p
    vals = tuple(
        2 * p * q * Fraction(k * (n - k), n) + Fraction(2, n) * x * x + (q - p) * Fraction(n - 2 * k, n) * x
        for x in pmf.atoms
    )
    return SteinCoefficient(pmf.offset, vals)


def stein_convolve(Tx: SteinCoefficient, pmf_x: LatticePMF, Ty: SteinCoefficient, pmf_y: LatticePMF) -> SteinCoefficient:
    """T_Z(z) = E[T_X(X) + T_Y(Y) | X + Y = z] for independent X, Y."""
    if Tx.offset != pmf_x.offset or Ty.offset != pmf_y.offset:
        raise InvalidParameter("Stein coefficient and law must share the support")
    wx, wy = pmf_x.weights, pmf_y.weights
    Lz = len(wx) + len(wy) - 1
    num = [Fraction(0)] * Lz
    den = [0] * Lz
    for i, a in enumerate(wx):
        ta = Tx.values[i]
        for j, b in enumerate(wy):
            ab = a * b
            num[i + j] += ab * (ta + Ty.values[j])
            den[i + j] += ab
    return SteinCoefficient(pmf_x.offset + pmf_y.offset, tuple(u / d for u, d in zip(num, den)))


def stein_scale_perturb(Tx: SteinCoefficient, pmf_x: LatticePMF) -> SteinCoefficient:
    """Stein coefficient of Y = 2X + R, R in {-1, 0, 1} w.p. 1/4, 1/2, 1/4.

    y = 2x:     T_Y(y) = 4 T_X(x) + 1
    y = 2x - 1: T_Y(y) = 2(T_X(x) + T_X(x-1) + 1) - R(y) with
                R(y) = (y + d)(y + 2d) / (T_X(x) + T_X(x-1) + 1),
                d = T_X(x) - T_X(x-1), T_X taken as |.| off the support.
    """
    if Tx.offset != pmf_x.offset:
        raise InvalidParameter("Stein coefficient and law must share the support")
    a = Tx.offset
    L = len(Tx)
    vals = []
    for i in range(L + 1):
        x = a + i
        y = 2 * x - 1
        tx, tx1 = Tx.at(x), Tx.at(x - 1)
        d = tx - tx1
        s = tx + tx1 + 1
        vals.append(2 * s - (y + d) * (y + 2 * d) / s)
        if i < L:
            vals.append(4 * tx + 1)
    return SteinCoefficient(2 * a - 1, tuple(vals))


def stein_binomial_scaled(n: int, p) -> SteinCoefficient:
    """Closed form of the Stein coefficient of 2X + R, X centered Binomial(n, p)."""
    p = _as_fraction(p)
    q = 1 - p
    base = make_centered_binomial(n, p)
    a = base.offset
    vals = []
    for i in range(2 * len(base) + 1):
        y = 2 * a - 1 + i
        if i % 2:
            vals.append(8 * p * q * n + 2 * (q - p) * y + 1)
        else:
            r = (y + 2 * (q - p)) * (y + (q - p)) / (4 * p * q * n + (q - p) * y + 1)
            vals.append(8 * p * q * n + 2 * (q - p) * y + 2 - r)
    return SteinCoefficient(2 * a - 1, tuple(vals))


def stein_hypergeometric_scaled(n: int, k: int, s: int) -> SteinCoefficient:
    """Closed form of the Stein coefficient of 2X + R, X the centered
    hypergeometric sample sum."""
    base = make_hypergeometric(n, k, s, centered=True)
    p = Fraction(n + s, 2 * n)
    q = 1 - p
    c = 8 * p * q * Fraction(k * (n - k), n)
    e = (q - p) * (1 - Fraction(2 * k, n))
    a = base.offset
    vals = []
    for i in range(2 * len(base) + 1):
        y = 2 * a - 1 + i
        if i % 2:
            vals.append(c + Fraction(2, n) * y * y + 2 * e * y + 1)
        else:
            num = (y * (1 + Fraction(2, n)) + e) * (y * (1 + Fraction(4, n)) + 2 * e)
            den = c / 2 + (y * y + 1) / Fraction(n) + e * y + 1
            vals.append(c + (2 * y * y + 2) / Fraction(n) + 2 + 2 * e * y - num / den)
    return SteinCoefficient(2 * a - 1, tuple(vals))



# Cross-validation of the closed forms against the general formula.

def _binomial_row(n: int) -> dict:
    counts = {"closed": 0, "scaled": 0, "convolution": 0}
    bad = []
    ps = [Fraction(j, n) for j in range(1, n)]
    for p in ps:
        X = make_centered_binomial(n, p)
        T = stein_from_pmf(X)
        if stein_binomial(n, p) != T:
            bad.append(("binomial", n, frac_str(p)))
        TY = stein_from_pmf(perturb_scale(X))
        if stein_scale_perturb(T, X) != TY or stein_binomial_scaled(n, p) != TY:
            bad.append(("binomial_scaled", n, frac_str(p)))
        counts["closed"] += 1
        counts["scaled"] += 1
    # Binomial(n1, p) * Binomial(n - n1, p) = Binomial(n, p), for p = 1/2
    # and p = 1/4 whenever both means are integers.
    for p in (Fraction(1, 2), Fraction(1, 4)):
        g = p.denominator
        for n1 in range(g, n // 2 + 1, g):
            n2 = n - n1
            if n2 % g:
                continue
            X1, X2 = make_centered_binomial(n1, p), make_centered_binomial(n2, p)
            Tz = stein_convolve(stein_binomial(n1, p), X1, stein_binomial(n2, p), X2)
            if Tz != stein_from_pmf(convolve(X1, X2)) or Tz != stein_binomial(n, p):
                bad.append(("binomial_convolution", n1, n2, frac_str(p)))
            counts["convolution"] += 1
    return {"counts": counts, "bad": bad}


def _scaled_s_values(n: int) -> list:
    lo = -n + 2
    mid = 0 if n % 2 == 0 else 1
    return sorted({lo, mid, n - 2})


def _hypergeometric_row(n: int) -> dict:
    counts = {"closed": 0, "scaled": 0, "convolution": 0}
    bad = []
    for k in range(1, n):
        for s in range(-n + 2, n - 1, 2):
            X = make_hypergeometric(n, k, s, centered=True)
            T = stein_from_pmf(X)
            if stein_hypergeometric(n, k, s) != T:
                bad.append(("hypergeometric", n, k, s))
            counts["closed"] += 1
            if s in _scaled_s_values(n):
                TY = stein_from_pmf(perturb_scale(X))
                if stein_scale_perturb(T, X) != TY or stein_hypergeometric_scaled(n, k, s) != TY:
                    bad.append(("hypergeometric_scaled", n, k, s))
                counts["scaled"] += 1
    # Hypergeometric sample sum convolved with an independent walk.
    k, s = n // 2, 0 if n % 2 == 0 else 1
    X = make_hypergeometric(n, k, s, centered=True)
    m = n + n % 2
    B = make_centered_binomial(m, Fraction(1, 2))
    Tz = stein_convolve(stein_hypergeometric(n, k, s), X, stein_binomial(m, Fraction(1, 2)), B)
    if Tz != stein_from_pmf(convolve(X, B)):
        bad.append(("hypergeometric_convolution", n, k, s))
    counts["convolution"] += 1
    return {"counts": counts, "bad": bad}


def stein_crossvalidate(n_max: int = 64, jobs: int = 1) -> dict:
    """Rational equality of every closed form, of the convolution rule and
    of the 2X + R scaling rule with the general formula.

    Binomial corpus: 2 <= n <= n_max, p = j/n (0 < j < n); convolutions of binomials
    with n1 + n2 = n and p in {1/2, 1/4}. Hypergeometric corpus: n <= n_max, all k
    and all non-degenerate s for the closed form; three s values per n for
    the scaling rule; one hypergeometric-plus-walk convolution per n."""
    from ._parallel import ordered_map

    ns = list(range(1, n_max + 1))
    out = {}
    for name, fn, lo in (("binomial", _binomial_row, 2), ("hypergeometric", _hypergeometric_row, 2)):
        rows = ordered_map(fn, [n for n in ns if n >= lo], jobs)
        counts = {key: sum(r["counts"][key] for r in rows) for key in ("closed", "scaled", "convolution")}
        bad = [list(b) for r in rows for b in r["bad"]]
        by_kind = {key: 0 for key in counts}
        for b in bad:
            tag = b[0].rsplit("_", 1)[-1]
            by_kind[tag if tag in ("scaled", "convolution") else "closed"] += 1
        out[name] = {"n_range": [lo, n_max], "instances": counts, "mismatches_by_kind": by_kind,
                     "mismatches": bad[:20], "n_mismatches": len(bad)}
    out["pass"] = all(out[k]["n_mismatches"] == 0 for k in ("binomial", "hypergeometric"))
    return out
