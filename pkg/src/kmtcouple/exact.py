"""Exact rational laws on unit-spaced lattice segments.

A law is stored as a tuple of positive integer weights over one common
denominator, which keeps convolution, tails and comonotone merging in plain
integer arithmetic. Masses are exposed as reduced ``Fraction`` values.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np


class InvalidParameter(ValueError):
    """Raised when a constructor or check receives arguments outside its domain."""


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(x)


def frac_str(x: Fraction) -> str:
    """Serialize a rational as ``p/q`` (always with a denominator)."""
    x = _as_fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_frac(text: str) -> Fraction:
    return Fraction(text)


@dataclass(frozen=True, eq=False)
class LatticePMF:
    """Law of a variable on ``offset + {0, 1, ..., L-1}``.

    ``weights[i] / denom`` is the mass of atom ``offset + i``. Every weight is
    positive, so the segment is exactly the support. ``scale`` records how the
    atoms map back to the underlying variable (``value = scale * atom``); walk
    laws on the half lattice carry ``scale=2``.
    """

    offset: Fraction
    weights: tuple
    denom: int
    scale: int = 1

    def __post_init__(self):
        object.__setattr__(self, "offset", _as_fraction(self.offset))
        w = tuple(int(x) for x in self.weights)
        if not w:
            raise InvalidParameter("empty support")
        if any(x <= 0 for x in w):
            raise InvalidParameter("weights must be positive on the whole segment")
        d = int(self.denom)
        if sum(w) != d:
            raise InvalidParameter("weights do not sum to the denominator")
        g = d
        for x in w:
            g = math.gcd(g, x)
            if g == 1:
                break
        if g > 1:
            w = tuple(x // g for x in w)
            d //= g
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "denom", d)

    @classmethod
    def from_masses(cls, offset, masses: Sequence, scale: int = 1) -> "LatticePMF":
        fr = [_as_fraction(m) for m in masses]
        d = 1
        for m in fr:
            d = d * m.denominator // math.gcd(d, m.denominator)
        w = [m.numerator * (d // m.denominator) for m in fr]
        return cls(_as_fraction(offset), tuple(w), d, scale)

    @classmethod
    def point(cls, x=0, scale: int = 1) -> "LatticePMF":
        return cls(_as_fraction(x), (1,), 1, scale)

    def __len__(self):
        return len(self.weights)

    def __eq__(self, other):
        if not isinstance(other, LatticePMF):
            return NotImplemented
        return (self.offset, self.weights, self.denom, self.scale) == (
            other.offset,
            other.weights,
            other.denom,
            other.scale,
        )

    def __hash__(self):
        return hash((self.offset, self.weights, self.denom, self.scale))

    @property
    def length(self) -> int:
        return len(self.weights)

    @property
    def lo(self) -> Fraction:
        return self.offset

    @property
    def hi(self) -> Fraction:
        return self.offset + len(self.weights) - 1

    @property
    def atoms(self) -> tuple:
        return tuple(self.offset + i for i in range(len(self.weights)))

    @property
    def masses(self) -> tuple:
        return tuple(Fraction(w, self.denom) for w in self.weights)

    def float_masses(self) -> np.ndarray:
        d = self.denom
        return np.array([w / d for w in self.weights], dtype=float)

    def float_atoms(self) -> np.ndarray:
        return float(self.offset) + np.arange(len(self.weights), dtype=float)

    def index(self, x) -> int | None:
        j = _as_fraction(x) - self.offset
        if j.denominator != 1 or not 0 <= j < len(self.weights):
            return None
        return int(j)

    def mass(self, x) -> Fraction:
        i = self.index(x)
        return Fraction(0) if i is None else Fraction(self.weights[i], self.denom)

    @cached_property
    def cum_weights(self) -> tuple:
        out, acc = [], 0
        for w in self.weights:
            acc += w
            out.append(acc)
        return tuple(out)

    def cdf(self, x) -> Fraction:
        """P(X <= x) for any rational x."""
        j = math.floor(_as_fraction(x) - self.offset)
        if j < 0:
            return Fraction(0)
        if j >= len(self.weights):
            return Fraction(1)
        return Fraction(self.cum_weights[j], self.denom)

    def mean(self) -> Fraction:
        s = sum(i * w for i, w in enumerate(self.weights))
        return self.offset + Fraction(s, self.denom)

    def variance(self) -> Fraction:
        s1 = sum(i * w for i, w in enumerate(self.weights))
        s2 = sum(i * i * w for i, w in enumerate(self.weights))
        m = Fraction(s1, self.denom)
        return Fraction(s2, self.denom) - m * m

    def with_scale(self, scale: int) -> "LatticePMF":
        return LatticePMF(self.offset, self.weights, self.denom, scale)

    def shifted(self, c) -> "LatticePMF":
        return LatticePMF(self.offset + _as_fraction(c), self.weights, self.denom, self.scale)

    def to_dict(self) -> dict:
        return {
            "offset": frac_str(self.offset),
            "scale": self.scale,
            "masses": [frac_str(m) for m in self.masses],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatticePMF":
        return cls.from_masses(
            parse_frac(d["offset"]), [parse_frac(m) for m in d["masses"]], int(d.get("scale", 1))
        )


@dataclass(frozen=True)
class TailTable:
    """Survival function ``P(X >= offset + i)`` on the support segment."""

    offset: Fraction
    numerators: tuple
    denom: int

    @property
    def survival(self) -> tuple:
        return tuple(Fraction(x, self.denom) for x in self.numerators)

    def at(self, x) -> Fraction:
        j = _as_fraction(x) - self.offset
        j = math.ceil(j)
        if j <= 0:
            return Fraction(1)
        if j >= len(self.numerators):
            return Fraction(0)
        return Fraction(self.numerators[j], self.denom)


def tail(pmf: LatticePMF) -> TailTable:
    out = [0] * len(pmf.weights)
    acc = 0
    for i in range(len(pmf.weights) - 1, -1, -1):
        acc += pmf.weights[i]
        out[i] = acc
    return TailTable(pmf.offset, tuple(out), pmf.denom)


def binomial_row(n: int) -> list:
    """C(n, j) for j = 0..n by the multiplicative recurrence."""
    row = [1] * (n + 1)
    c = 1
    for j in range(1, n + 1):
        c = c * (n - j + 1) // j
        row[j] = c
    return row


def make_walk_pmf(n: int) -> LatticePMF:
    """Half-lattice walk law: S_n / 2, supported on {-n/2, ..., n/2}."""
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise InvalidParameter(f"walk length must be a nonnegative integer, got {n!r}")
    n = int(n)
    return LatticePMF(Fraction(-n, 2), tuple(binomial_row(n)), 1 << n, scale=2)


def make_centered_binomial(n: int, p) -> LatticePMF:
    """Law of Bin(n, p) - np. Requires np to be an integer."""
    p = _as_fraction(p)
    if n < 0 or not 0 <= p <= 1:
        raise InvalidParameter("need n >= 0 and p in [0, 1]")
    mu = n * p
    if mu.denominator != 1:
        raise InvalidParameter("n*p must be an integer")
    a, b = p.numerator, p.denominator
    if a == 0 or a == b:
        return LatticePMF.point(0)
    row = binomial_row(n)
    w = [row[j] * a**j * (b - a) ** (n - j) for j in range(n + 1)]
    return LatticePMF(-mu, tuple(w), b**n)


def hypergeometric_weights(n: int, k: int, s: int) -> tuple[int, list, int]:
    """Weights of the number of +1 coupons among k draws from an urn of n
    coupons with sum s. Returns (first atom, weights, denominator)."""
    if n < 1 or not 0 <= k <= n:
        raise InvalidParameter(f"need 1 <= n and 0 <= k <= n, got n={n}, k={k}")
    if abs(s) > n or (n + s) % 2:
        raise InvalidParameter(f"urn sum s={s} incompatible with n={n}")
    K = (n + s) // 2
    lo = max(0, k - (n - K))
    hi = min(k, K)
    w = [math.comb(K, j) * math.comb(n - K, k - j) for j in range(lo, hi + 1)]
    return lo, w, math.comb(n, k)


def make_hypergeometric(n: int, k: int, s: int = 0, centered: bool = False) -> LatticePMF:
    """Law of the half-lattice sample sum (S_k[n, s] + k) / 2.

    With ``centered=True`` the mean k(n+s)/(2n) is subtracted, giving the
    centered variable used by the Stein coefficient formulas.
    """
    lo, w, d = hypergeometric_weights(n, k, s)
    off = Fraction(lo)
    if centered:
        off -= Fraction(k * (n + s), 2 * n)
    return LatticePMF(off, tuple(w), d)


def _poly_mul(a: Sequence[int], b: Sequence[int]) -> list:
    if len(a) < len(b):
        a, b = b, a
    if len(b) == 1:
        return [x * b[0] for x in a]
    out = np.convolve(np.array(a, dtype=object), np.array(b, dtype=object))
    return [int(x) for x in out]


def convolve(a: LatticePMF, b: LatticePMF) -> LatticePMF:
    """Law of X + Y for independent X ~ a, Y ~ b."""
    w = _poly_mul(a.weights, b.weights)
    scale = a.scale if a.scale == b.scale else 1
    return LatticePMF(a.offset + b.offset, tuple(w), a.denom * b.denom, scale)


def perturb_scale(pmf: LatticePMF) -> LatticePMF:
    """Law of Y = 2X + R with R in {-1, 0, 1} w.p. 1/4, 1/2, 1/4 independent of X."""
    w = pmf.weights
    L = len(w)
    out = []
    for x in range(L + 1):
        left = w[x - 1] if x >= 1 else 0
        here = w[x] if x < L else 0
        out.append(left + here)
        if x < L:
            out.append(2 * here)
    return LatticePMF(2 * pmf.offset - 1, tuple(out), 4 * pmf.denom)


def quantile(pmf: LatticePMF, u) -> Fraction:
    """Right-continuous inverse: smallest atom x with P(X <= x) >= u, u in (0, 1)."""
    u = _as_fraction(u)
    if not 0 < u < 1:
        raise InvalidParameter("quantile level must lie in (0, 1)")
    thr = -((-u.numerator * pmf.denom) // u.denominator)
    i = bisect_left(pmf.cum_weights, thr)
    return pmf.offset + i


def exact_dot(weights: Sequence[int], denom: int, values: Sequence[float]) -> float:
    """Correctly rounded value of sum(weights[i] * values[i]) / denom.

    Each float is an exact dyadic rational, so the sum is formed in integers
    and rounded once at the end.
    """
    parts = []
    emin = 0
    for v in values:
        if not math.isfinite(v):
            raise OverflowError("non-finite functional value")
        mant, e = math.frexp(v)
        mi = int(math.ldexp(mant, 53))
        parts.append((mi, e - 53))
        if mi and e - 53 < emin:
            emin = e - 53
    total = 0
    for w, (mi, e) in zip(weights, parts):
        if mi:
            total += w * (mi << (e - emin))
    if emin < 0:
        return total / (denom << (-emin))
    return (total << emin) / denom


def expect(pmf: LatticePMF, functional: str, **kw):
    """Expectation of a named functional of X.

    ``moment`` (r): E[X^r], exact.
    ``indicator-tail`` (x): P(X >= x), exact.
    ``abs-exp`` (theta): E[exp(theta |X|)].
    ``exp`` (lam): E[exp(lam X)].
    ``quad-exp`` (a, b, k): E[exp(a X / sqrt(k) + b X^2 / k)].
    The transcendental ones return a double rounded once from the exact sum
    of the per-atom doubles.
    """
    atoms = pmf.atoms
    if functional == "moment":
        r = int(kw.get("r", 1))
        return sum(Fraction(w, pmf.denom) * x**r for w, x in zip(pmf.weights, atoms))
    if functional == "indicator-tail":
        return tail(pmf).at(kw["x"])
    xs = [float(x) for x in atoms]
    if functional == "abs-exp":
        th = float(kw["theta"])
        vals = [math.exp(th * abs(x)) for x in xs]
    elif functional == "exp":
        lam = float(kw["lam"])
        vals = [math.exp(lam * x) for x in xs]
    elif functional == "quad-exp":
        a, b, k = float(kw["a"]), float(kw["b"]), float(kw["k"])
        vals = [math.exp(a * x / math.sqrt(k) + b * x * x / k) for x in xs]
    else:
        raise InvalidParameter(f"unknown functional {functional!r}")
    return exact_dot(pmf.weights, pmf.denom, vals)
