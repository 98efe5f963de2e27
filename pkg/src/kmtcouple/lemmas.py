"""Exact verification of the binomial mass and tail comparisons.

For a positive integer m the two laws being compared are

    alpha_m(k) = C(2m, m+k) / 2^(2m)          (k = 1..m)
    beta_m(k)  = C(8m+1, 4m+2k) / 2^(8m)      (k = 1..2m)

i.e. P(2 S_{2m} = 4k) and P(S_{8m} in {4k-2, 4k}). All comparisons are made
on integer numerators after clearing the power-of-two denominators, so there
is no rounding anywhere in the combinatorial suites.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial

import numpy as np
from scipy.special import xlog1py

from ._parallel import ordered_map
from .exact import InvalidParameter, binomial_row, frac_str

MAX_STORED_VIOLATIONS = 200
ANALYTIC_SLACK = 1e-12


@dataclass(frozen=True)
class AlphaBetaTable:
    """Integer numerators of alpha_m and beta_m.

    ``a[k]`` is C(2m, m+k) for k = 0..m and ``b[k]`` is C(8m+1, 4m+2k) for
    k = 0..2m (index 0 is kept for convenience, the lemmas use k >= 1).
    """

    m: int
    a: tuple
    b: tuple

    @property
    def alpha_denom(self) -> int:
        return 1 << (2 * self.m)

    @property
    def beta_denom(self) -> int:
        return 1 << (8 * self.m)

    @property
    def alpha(self) -> tuple:
        """alpha_m(k) for k = 1..m."""
        return tuple(Fraction(x, self.alpha_denom) for x in self.a[1:])

    @property
    def beta(self) -> tuple:
        """beta_m(k) for k = 1..2m."""
        return tuple(Fraction(x, self.beta_denom) for x in self.b[1:])

    def alpha_at(self, k: int) -> Fraction:
        return Fraction(self.a[k], self.alpha_denom) if 0 <= k <= self.m else Fraction(0)

    def beta_at(self, k: int) -> Fraction:
        return Fraction(self.b[k], self.beta_denom) if 0 <= k <= 2 * self.m else Fraction(0)

    def alpha_tail(self) -> tuple:
        """Suffix sums sum_{j >= k} a[j] for k = 0..m."""
        return _suffix(self.a)

    def beta_tail(self) -> tuple:
        return _suffix(self.b)


def _suffix(xs) -> tuple:
    out = [0] * len(xs)
    acc = 0
    for i in range(len(xs) - 1, -1, -1):
        acc += xs[i]
        out[i] = acc
    return tuple(out)


def alpha_beta_tables(m: int) -> AlphaBetaTable:
    """Build the tables and check the Pascal identity
    C(8m, 4m+2k) + C(8m, 4m+2k-1) = C(8m+1, 4m+2k) on every entry."""
    if m < 1:
        raise InvalidParameter("m must be positive")
    row2 = binomial_row(2 * m)
    row8 = binomial_row(8 * m)
    row81 = binomial_row(8 * m + 1)
    a = tuple(row2[m + k] for k in range(m + 1))
    b = tuple(row81[4 * m + 2 * k] for k in range(2 * m + 1))
    for k in range(1, 2 * m + 1):
        if row8[4 * m + 2 * k] + row8[4 * m + 2 * k - 1] != b[k]:
            raise ArithmeticError(f"Pascal identity failed at m={m}, k={k}")
    return AlphaBetaTable(m, a, b)


@dataclass
class LemmaReport:
    lemma: str
    ranges: dict
    violations: list = field(default_factory=list)
    violation_count: int = 0
    threshold: int | None = None
    per_param: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violation_count == 0

    @property
    def worst_margin(self) -> float | None:
        vals = [r["worst_margin"] for r in self.per_param if r["worst_margin"] is not None]
        return min(vals) if vals else None

    def add_violation(self, **kw):
        self.violation_count += 1
        if len(self.violations) < MAX_STORED_VIOLATIONS:
            rec = {}
            for key, val in kw.items():
                rec[key] = frac_str(val) if isinstance(val, Fraction) else val
            self.violations.append(rec)

    def to_dict(self) -> dict:
        return {
            "lemma": self.lemma,
            "pass": self.passed,
            "ranges": self.ranges,
            "violation_count": self.violation_count,
            "violations": self.violations,
            "threshold": self.threshold,
            "worst_margin": self.worst_margin,
            "per_param": self.per_param,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LemmaReport":
        return cls(
            lemma=d["lemma"],
            ranges=d["ranges"],
            violations=d["violations"],
            violation_count=d["violation_count"],
            threshold=d["threshold"],
            per_param=d["per_param"],
            extra=d["extra"],
        )


def _log_ratio(num: int, den: int) -> float:
    """log(num / den) for positive integers of any size."""
    return math.log(num) - math.log(den)


def _merge(report: LemmaReport, results):
    for res in results:
        report.per_param.append(res["row"])
        for v in res["violations"]:
            report.add_violation(**v)
        report.violation_count += res.get("extra_count", 0)


# Lemma: alpha_m(k) <= beta_m(k) for 1 <= k <= m.

def _mass_domination_one(m: int) -> dict:
    t = alpha_beta_tables(m)
    sh = 6 * m
    viol = []
    worst = math.inf
    for k in range(1, m + 1):
        lhs, rhs = t.a[k] << sh, t.b[k]
        if lhs > rhs:
            viol.append(dict(m=m, k=k, lhs=Fraction(t.a[k], t.alpha_denom), rhs=Fraction(t.b[k], t.beta_denom)))
        worst = min(worst, _log_ratio(rhs, lhs))
    return {"row": {"m": m, "pass": not viol, "worst_margin": worst}, "violations": viol}


def check_mass_domination(m_max: int, jobs: int = 1) -> LemmaReport:
    if m_max < 1:
        raise InvalidParameter("m_max must be positive")
    rep = LemmaReport("mass_domination", {"m": [1, m_max], "k": "1..m"})
    _merge(rep, ordered_map(_mass_domination_one, range(1, m_max + 1), jobs))
    return rep


# Lemma: alpha_m(k) >= beta_m(l) whenever 1 <= k <= l - (1 + l^3/m^2)/4.

def shifted_kmax(m: int, ell: int) -> int:
    """Largest integer k with k <= l - (1 + l^3/m^2)/4, computed exactly."""
    return (4 * m * m * ell - m * m - ell**3) // (4 * m * m)


def _shifted_one(m: int) -> dict:
    t = alpha_beta_tables(m)
    sh = 6 * m
    # alpha is strictly decreasing in k >= 0, so the violators for a given l
    # form a suffix of the admissible range; locate it by bisection.
    neg_scaled = [-(x << sh) for x in t.a]
    for k in range(m):
        assert t.a[k] > t.a[k + 1]
    viol = []
    worst = math.inf
    special_checked = 0
    for ell in range(1, 2 * m + 1):
        kmax = shifted_kmax(m, ell)
        if kmax < 1:
            continue
        if kmax > m:
            raise ArithmeticError(f"admissible k exceeds m at m={m}, l={ell}")
        rhs = t.b[ell]
        first_bad = bisect_left(neg_scaled, -rhs + 1, 1, kmax + 1)
        for k in range(first_bad, kmax + 1):
            viol.append(dict(m=m, k=k, l=ell, lhs=t.alpha_at(k), rhs=t.beta_at(ell)))
        worst = min(worst, _log_ratio(t.a[kmax] << sh, rhs))
        if ell >= 2 and ell**3 <= 3 * m * m:
            # special case k = l - 1 lies inside the admissible region
            if kmax < ell - 1:
                raise ArithmeticError(f"special case outside region at m={m}, l={ell}")
            special_checked += 1
            if (t.a[ell - 1] << sh) < rhs:
                viol.append(dict(m=m, k=ell - 1, l=ell, lhs=t.alpha_at(ell - 1), rhs=t.beta_at(ell), case="special"))
    row = {"m": m, "pass": not viol, "worst_margin": None if worst == math.inf else worst}
    return {"row": row, "violations": viol, "special": special_checked}


def check_shifted_domination(m_max: int, jobs: int = 1) -> LemmaReport:
    if m_max < 1:
        raise InvalidParameter("m_max must be positive")
    rep = LemmaReport("shifted_domination", {"m": [1, m_max], "l": "1..2m", "k": "1..l-(1+l^3/m^2)/4"})
    res = ordered_map(_shifted_one, range(1, m_max + 1), jobs)
    _merge(rep, res)
    rep.extra["special_case_pairs_checked"] = sum(r["special"] for r in res)
    return rep


# Monotonicity of f(m,k) = beta_m(k)/alpha_m(k) and g_h(m,k) = beta_m(k)/alpha_m(k-h).

def _ratio_one(m: int, h_max: int) -> dict:
    t = alpha_beta_tables(m)
    a, b = t.a, t.b
    viol = []
    worst = math.inf

    def record(ok, lhs, rhs, **info):
        nonlocal worst
        # every check is of the form lhs <= rhs with positive integers
        worst = min(worst, _log_ratio(rhs, lhs))
        if not ok:
            viol.append(dict(m=m, lhs=lhs, rhs=rhs, **info))

    # f(m, k) <= f(m, k+1)
    for k in range(1, m):
        lhs, rhs = b[k] * a[k + 1], b[k + 1] * a[k]
        record(lhs <= rhs, lhs, rhs, k=k, check="f_increasing_in_k")
    # f(m+1, 1) <= f(m, 1):  b'(1) a(1) <= 64 b(1) a'(1)
    a1n = math.comb(2 * m + 2, m + 2)
    lhs, rhs = _beta_num(m + 1, 1) * a[1], 64 * b[1] * a1n
    record(lhs <= rhs, lhs, rhs, k=1, check="f_decreasing_in_m")
    for h in range(1, h_max + 1):
        # g_h(m, k+1) <= g_h(m, k) for h+1 <= k, k^3 <= (4h-1) m^2
        for k in range(h + 1, min(2 * m, m + h)):
            if k**3 > (4 * h - 1) * m * m:
                break
            lhs, rhs = b[k + 1] * a[k - h], b[k] * a[k + 1 - h]
            record(lhs <= rhs, lhs, rhs, k=k, h=h, check="g_decreasing_in_k")
        # g_h(m+1, h+1) >= g_h(m, h+1) for m >= h+1
        if m >= h + 1:
            lhs, rhs = 64 * b[h + 1] * a1n, _beta_num(m + 1, h + 1) * a[1]
            record(lhs <= rhs, lhs, rhs, k=h + 1, h=h, check="g_increasing_in_m")
    f_m1 = b[1] / (a[1] << (6 * m))
    return {
        "row": {"m": m, "pass": not viol, "worst_margin": worst, "f_m1": f_m1},
        "violations": viol,
    }


def _beta_num(m: int, k: int) -> int:
    return math.comb(8 * m + 1, 4 * m + 2 * k)


def check_ratio_monotonicity(m_max: int, h_max: int, jobs: int = 1) -> LemmaReport:
    if m_max < 2 or h_max < 1:
        raise InvalidParameter("need m_max >= 2 and h_max >= 1")
    rep = LemmaReport("ratio_monotonicity", {"m": [1, m_max], "h": [1, h_max]})
    _merge(rep, ordered_map(partial(_ratio_one, h_max=h_max), range(1, m_max + 1), jobs))
    return rep


# Tail comparison: part 1 abar(k) <= bbar(k); part 2 abar(k) >= bbar(l)
# for 1 <= k <= l - l^2/(4m) - 1.

def tail_kmax(m: int, ell: int) -> int:
    return (4 * m * ell - ell * ell - 4 * m) // (4 * m)


def _tail_one(m: int) -> dict:
    t = alpha_beta_tables(m)
    sh = 6 * m
    at, bt = t.alpha_tail(), t.beta_tail()
    da, db = t.alpha_denom, t.beta_denom
    v1, v2 = [], []
    worst1 = worst2 = math.inf
    for k in range(1, m + 1):
        lhs, rhs = at[k] << sh, bt[k]
        if lhs > rhs:
            v1.append(dict(m=m, k=k, lhs=Fraction(at[k], da), rhs=Fraction(bt[k], db), part=1))
        worst1 = min(worst1, _log_ratio(rhs, lhs))
    neg = [-(x << sh) for x in at]
    for ell in range(1, 2 * m + 1):
        kmax = tail_kmax(m, ell)
        if kmax < 1:
            continue
        rhs = bt[ell]
        first_bad = bisect_left(neg, -rhs + 1, 1, kmax + 1)
        for k in range(first_bad, kmax + 1):
            v2.append(dict(m=m, k=k, l=ell, lhs=Fraction(at[k], da), rhs=Fraction(rhs, db), part=2))
        worst2 = min(worst2, _log_ratio(at[kmax] << sh, rhs))
    row = {
        "m": m,
        "pass": not v1 and not v2,
        "part1_pass": not v1,
        "part2_pass": not v2,
        "worst_margin": worst1,
        "part2_worst_margin": None if worst2 == math.inf else worst2,
    }
    return {"row": row, "violations": v1, "part2": v2}


def check_tail_domination(m_max: int, jobs: int = 1) -> LemmaReport:
    """Part 1 must hold for every m. Part 2 is asserted only from some m0 on,
    so its violations below the discovered threshold are recorded in
    ``extra`` rather than failing the report."""
    if m_max < 1:
        raise InvalidParameter("m_max must be positive")
    rep = LemmaReport("tail_domination", {"m": [1, m_max], "part1_k": "1..m", "part2": "1<=k<=l-l^2/(4m)-1"})
    res = ordered_map(_tail_one, range(1, m_max + 1), jobs)
    _merge(rep, res)
    m0 = None
    for r in reversed(res):
        if r["part2"]:
            break
        m0 = r["row"]["m"]
    rep.threshold = m0
    below = [v for r in res for v in r["part2"]]
    rep.extra["part2_threshold_m0"] = m0
    rep.extra["part2_tested_range"] = [1, m_max]
    rep.extra["part2_violations_below_m0"] = len(below)
    rep.extra["part2_violated_m"] = sorted({v["m"] for v in below})
    rep.extra["part2_examples"] = [
        {key: (frac_str(val) if isinstance(val, Fraction) else val) for key, val in v.items()} for v in below[:20]
    ]
    if m0 is None:
        for v in res[-1]["part2"]:
            rep.add_violation(**v)
        if not res[-1]["part2"]:
            rep.violation_count += 1
    return rep


# Analytic estimates.

def entropy_D(p):
    """Relative entropy of Bernoulli(p) with respect to Bernoulli(1/2)."""
    u = 2.0 * np.asarray(p, dtype=float) - 1.0
    return entropy_D_centered(u)


def entropy_D_centered(u):
    """D(1/2 + u/2), evaluated without cancellation near u = 0."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (xlog1py(1.0 + u, u) + xlog1py(1.0 - u, -u))


def entropy_Q(t):
    t = np.asarray(t, dtype=float)
    s = 2.0 * t - t * t
    return 4.0 * entropy_D_centered(t) - entropy_D_centered(s)


def check_entropy_bound(grid_size: int) -> LemmaReport:
    if grid_size < 2:
        raise InvalidParameter("grid_size must be at least 2")
    t = np.arange(1, grid_size + 1, dtype=float) / grid_size
    margin = entropy_Q(t) - 1.5 * t**3
    rep = LemmaReport("entropy_cubic_bound", {"t": f"j/{grid_size}, j=1..{grid_size}"})
    bad = np.nonzero(margin < -ANALYTIC_SLACK)[0]
    for i in bad:
        rep.add_violation(t=float(t[i]), lhs=float(entropy_Q(t[i])), rhs=float(1.5 * t[i] ** 3))
    rep.per_param.append({"m": None, "pass": bad.size == 0, "worst_margin": float(margin.min())})
    rep.extra["min_margin_t"] = float(t[int(np.argmin(margin))])
    rep.extra["min_scaled_margin"] = float(np.min(margin / t**3))
    return rep


ASH_A = 1.0 / math.sqrt(8.0)
ASH_B = 1.0 / math.sqrt(2.0 * math.pi)


def _ash_one(n: int) -> dict:
    row = binomial_row(n)
    suffix = _suffix(row)
    ln2n = n * math.log(2.0)
    viol = []
    worst = math.inf
    for k in range(1, n):
        p = k / n
        q = 1.0 - p
        ent = n * float(entropy_D(p))
        pre = -0.5 * math.log(n * p * q)
        lo = math.log(ASH_A) + pre - ent
        hi = math.log(ASH_B) + pre - ent
        ex = math.log(row[k]) - ln2n
        for kind, small, big in (("point_lower", lo, ex), ("point_upper", ex, hi)):
            d = big - small
            worst = min(worst, d)
            if d < -ANALYTIC_SLACK:
                viol.append(dict(n=n, k=k, check=kind, lhs=math.exp(small), rhs=math.exp(big)))
        if 2 * k > n:
            ext = math.log(suffix[k]) - ln2n
            for kind, small, big in (("tail_lower", lo, ext), ("tail_upper", ext, -ent)):
                d = big - small
                worst = min(worst, d)
                if d < -ANALYTIC_SLACK:
                    viol.append(dict(n=n, k=k, check=kind, lhs=math.exp(small), rhs=math.exp(big)))
    return {"row": {"m": n, "pass": not viol, "worst_margin": worst}, "violations": viol}


def check_ash_sandwich(n_max: int, jobs: int = 1) -> LemmaReport:
    """Pointwise and tail two-sided bounds on 2^-n C(n, k); margins are on the
    log scale, so a margin of -1e-12 is a relative excess of about 1e-12."""
    if n_max < 2:
        raise InvalidParameter("n_max must be at least 2")
    rep = LemmaReport("ash_sandwich", {"n": [2, n_max], "k": "1..n-1 (tail: n/2<k<n)"})
    _merge(rep, ordered_map(_ash_one, range(2, n_max + 1), jobs))
    return rep
