"""Comonotone (quantile) couplings of lattice laws.

Includes the signed coupling of 2 S_n with S_{4n}, the quantile coupling of
S_n with a standard Gaussian and a sampler for the dyadic chain
S_n, S_{4n}, S_{16n}, ... built from successive comonotone couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.stats import binom

from ._parallel import ordered_map
from .exact import InvalidParameter, LatticePMF, binomial_row, frac_str
from .gauss import norm_ppf_log, ndtri

# Smallest even n from which the signed coupling of 2 S_n and S_{4n}
# satisfies both margins (discovered by ``signed_coupling_sweep``; the sweep
# through n = 2000 reproduces it).
SIGNED_COUPLING_N0 = 2


class CapabilityError(RuntimeError):
    pass


@dataclass(frozen=True)
class CouplingTable:
    """Joint law with integer weights over ``denom``; pairs index the supports
    of ``first`` and ``second``."""

    first: LatticePMF
    second: LatticePMF
    pairs: tuple
    denom: int

    @property
    def joint(self) -> dict:
        a0, b0 = self.first.offset, self.second.offset
        return {(a0 + i, b0 + j): Fraction(w, self.denom) for i, j, w in self.pairs}

    def value_pairs(self):
        """(scale_a * atom_a, scale_b * atom_b, mass) triples."""
        sa, sb = self.first.scale, self.second.scale
        a0, b0 = self.first.offset, self.second.offset
        for i, j, w in self.pairs:
            yield sa * (a0 + i), sb * (b0 + j), Fraction(w, self.denom)

    def row(self, i: int) -> list:
        return [(j, w) for ii, j, w in self.pairs if ii == i]

    def check_marginals(self) -> bool:
        ra = [0] * len(self.first)
        rb = [0] * len(self.second)
        for i, j, w in self.pairs:
            if w <= 0:
                return False
            ra[i] += w
            rb[j] += w
        fa = [Fraction(x, self.denom) for x in ra]
        fb = [Fraction(x, self.denom) for x in rb]
        return tuple(fa) == self.first.masses and tuple(fb) == self.second.masses

    def to_dict(self) -> dict:
        return {
            "first": self.first.to_dict(),
            "second": self.second.to_dict(),
            "pairs": [[frac_str(x), frac_str(y), frac_str(m)] for x, y, m in self.value_pairs()],
        }


def _merge_cdfs(wa, wb):
    """Overlap lengths of the CDF intervals of two weight vectors with equal
    totals. Zero-length overlaps (ties at interval boundaries) are skipped."""
    out = []
    i = j = 0
    ra, rb = wa[0], wb[0]
    na, nb = len(wa), len(wb)
    while True:
        step = ra if ra < rb else rb
        out.append((i, j, step))
        ra -= step
        rb -= step
        if ra == 0:
            i += 1
            if i == na:
                break
            ra = wa[i]
        if rb == 0:
            j += 1
            if j == nb:
                break
            rb = wb[j]
    return out


def comonotone_couple(a: LatticePMF, b: LatticePMF) -> CouplingTable:
    """Joint mass of (k, l) is the length of the overlap of the CDF intervals
    of k under ``a`` and l under ``b``."""
    d = a.denom * b.denom // math.gcd(a.denom, b.denom)
    fa, fb = d // a.denom, d // b.denom
    wa = [w * fa for w in a.weights]
    wb = [w * fb for w in b.weights]
    return CouplingTable(a, b, tuple(_merge_cdfs(wa, wb)), d)


def abs_walk_weights(n: int) -> list:
    """Weights (over 2^n) of |S_n| / 2 for even n on 0..n/2."""
    row = binomial_row(n)
    h = n // 2
    return [row[h]] + [2 * row[h + j] for j in range(1, h + 1)]


def abs_walk_pmf(n: int, scale: int) -> LatticePMF:
    if n % 2:
        raise InvalidParameter("|S_n| on the half lattice needs even n")
    return LatticePMF(0, tuple(abs_walk_weights(n)), 1 << n, scale)


@dataclass
class SignedCoupling:
    n: int
    table: CouplingTable
    margin_upper: int
    margin_diff: Fraction
    signed: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.margin_upper >= 0 and self.margin_diff >= 0


def _pair_margins(n: int, a: int, b: int):
    """a = |2 S_n|, b = |S_{4n}|: margins of a <= b + 2 and
    |a - b| <= b^2/(8n) + 9 (as an exact rational)."""
    return b + 2 - a, Fraction(b * b + 72 * n - 8 * n * abs(a - b), 8 * n)


def signed_couple_2s_4s(n: int) -> SignedCoupling:
    """Comonotone coupling of |2 S_n| and |S_{4n}| with a shared random sign."""
    if n < 2 or n % 2:
        raise InvalidParameter("n must be even and at least 2")
    t = comonotone_couple(abs_walk_pmf(n, 4), abs_walk_pmf(4 * n, 2))
    m1 = None
    m2 = None
    signed = {}
    for a, b, w in t.value_pairs():
        a, b = int(a), int(b)
        u, v = _pair_margins(n, a, b)
        m1 = u if m1 is None else min(m1, u)
        m2 = v if m2 is None else min(m2, v)
        if a == 0 and b == 0:
            signed[(0, 0)] = signed.get((0, 0), 0) + w
        else:
            for sg in (1, -1):
                key = (sg * a, sg * b)
                signed[key] = signed.get(key, 0) + w / 2
    return SignedCoupling(n, t, m1, m2, signed)


def signed_coupling_margins(n: int) -> dict:
    """Integer-only margin scan of the comonotone coupling of |2S_n|, |S_{4n}|."""
    wa = abs_walk_weights(n)
    wb = abs_walk_weights(4 * n)
    sh = 3 * n
    wa = [w << sh for w in wa]
    m1 = m2n = None
    worst_pair = None
    for i, j, _ in _merge_cdfs(wa, wb):
        a, b = 4 * i, 2 * j
        u = b + 2 - a
        v = b * b + 72 * n - 8 * n * abs(a - b)
        if m1 is None or u < m1:
            m1 = u
        if m2n is None or v < m2n:
            m2n, worst_pair = v, (a, b)
    m2 = Fraction(m2n, 8 * n)
    return {
        "n": n,
        "pass": m1 >= 0 and m2 >= 0,
        "margin_upper": m1,
        "margin_diff": frac_str(m2),
        "margin_diff_float": float(m2),
        "worst_pair": list(worst_pair),
    }


def discover_threshold(rows, key="pass"):
    """Smallest parameter from which every later row passes (None if the
    last row fails)."""
    thr = None
    for r in reversed(rows):
        if not r[key]:
            break
        thr = r["n"]
    return thr


def signed_coupling_sweep(n_max: int = 2000, jobs: int = 1) -> dict:
    ns = list(range(2, n_max + 1, 2))
    rows = ordered_map(signed_coupling_margins, ns, jobs)
    n0 = discover_threshold(rows)
    return {
        "check": "signed_coupling_2S_n_S_4n",
        "n_range": [2, n_max],
        "n0": n0,
        "pass": n0 is not None,
        "failing_n": [r["n"] for r in rows if not r["pass"]],
        "min_margin_upper": min(r["margin_upper"] for r in rows),
        "min_margin_diff": min(r["margin_diff_float"] for r in rows),
        "rows": rows,
    }


# Quantile coupling with a Gaussian.

@dataclass
class QuantileCheckReport:
    n: int
    margin_abs: float
    margin_diff: float
    atom_margins: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.margin_abs >= 0 and self.margin_diff >= 0

    def to_dict(self) -> dict:
        return {"n": self.n, "pass": self.passed, "margin_abs": self.margin_abs, "margin_diff": self.margin_diff}


def _even_z_edges(n: int):
    """Lower-half atoms s = 2j - n (j <= n/2) of S_n with their Gaussian
    quantile intervals (z_lo, z_hi]."""
    row = binomial_row(n)
    h = n // 2
    cum = []
    acc = 0
    for j in range(h + 1):
        acc += row[j]
        cum.append(acc)
    den = 1 << n
    p = np.array([c / den for c in cum])
    z_hi = np.empty(h + 1)
    tiny = p < 1e-300
    z_hi[~tiny] = ndtri(p[~tiny])
    if tiny.any():
        idx = np.nonzero(tiny)[0]
        ln_den = n * math.log(2.0)
        logs = np.array([math.log(cum[i]) - ln_den for i in idx])
        z_hi[idx] = norm_ppf_log(logs)
    z_lo = np.concatenate(([-np.inf], z_hi[:-1]))
    s = 2.0 * np.arange(h + 1) - n
    return s, z_lo, z_hi, row


def _interval_minima(s, z_lo, z_hi, rn):
    """Minimum over z in [z_lo, z_hi] of |z| rn + 3 - |s| and
    z^2 + 11 - |s - z rn|; both are piecewise convex in z, so the minimum sits
    at an endpoint, a kink or a vertex."""
    cands = np.stack(
        [z_lo, z_hi, np.zeros_like(s), s / rn, np.full_like(s, -rn / 2), np.full_like(s, rn / 2)], axis=1
    )
    inside = np.isfinite(cands) & (cands >= z_lo[:, None]) & (cands <= z_hi[:, None])
    z = np.where(inside, cands, np.nan)
    f1 = np.abs(z) * rn + 3.0 - np.abs(s)[:, None]
    f2 = z * z + 11.0 - np.abs(s[:, None] - z * rn)
    return np.nanmin(f1, axis=1), np.nanmin(f2, axis=1)


def gaussian_quantile_check(n: int, keep_atoms: bool = False) -> QuantileCheckReport:
    """Check |S_n| <= |Z| sqrt(n) + 3 and |S_n - Z sqrt(n)| <= Z^2 + 11 under
    S_n = F^{-1}(Phi(Z)), over every atom's whole Z-interval.

    Odd n is reduced to n + 1: S_{n+1} is quantile-coupled to Z and S_n is
    S_{n+1} minus its last step (every step value of positive conditional
    probability is checked).
    """
    if n < 1:
        raise InvalidParameter("n must be positive")
    rn = math.sqrt(n)
    if n % 2 == 0:
        s, zl, zh, _ = _even_z_edges(n)
        m1, m2 = _interval_minima(s, zl, zh, rn)
        atoms = s
    else:
        sp, zl, zh, _ = _even_z_edges(n + 1)
        parts1, parts2, atoms = [], [], []
        for x in (1.0, -1.0):
            s = sp - x
            ok = np.abs(s) <= n
            a1, a2 = _interval_minima(s[ok], zl[ok], zh[ok], rn)
            parts1.append(a1)
            parts2.append(a2)
            atoms.append(s[ok])
        m1 = np.concatenate(parts1)
        m2 = np.concatenate(parts2)
        atoms = np.concatenate(atoms)
    rep = QuantileCheckReport(n, float(m1.min()), float(m2.min()))
    if keep_atoms:
        rep.atom_margins = [(float(a), float(u), float(v)) for a, u, v in zip(atoms, m1, m2)]
    return rep


def _quantile_row(n):
    return gaussian_quantile_check(n).to_dict()


def quantile_coupling_sweep(n_max: int = 4096, jobs: int = 1) -> dict:
    rows = ordered_map(_quantile_row, range(1, n_max + 1), jobs)
    n0 = discover_threshold(rows)
    return {
        "check": "gaussian_quantile_coupling",
        "n_range": [1, n_max],
        "n0": n0,
        "pass": n0 is not None,
        "failing_n": [r["n"] for r in rows if not r["pass"]],
        "min_margin_abs": min(r["margin_abs"] for r in rows if n0 and r["n"] >= n0) if n0 else None,
        "min_margin_diff": min(r["margin_diff"] for r in rows if n0 and r["n"] >= n0) if n0 else None,
        "rows": rows,
    }


# Dyadic chain S_n, S_{4n}, S_{16n}, ...

@dataclass
class ChainTrajectory:
    n: int
    depth: int
    S: list
    Z: list
    steps: list
    methods: list

    def to_dict(self) -> dict:
        return {"n": self.n, "depth": self.depth, "S": self.S, "Z": self.Z, "steps": self.steps, "methods": self.methods}


def _abs_survival(N: int, x: int, strict: bool) -> float:
    """P(|S_N| > x) (strict) or P(|S_N| >= x) for x >= 0 of the parity of N."""
    if strict:
        x += 2
    if x <= 0:
        return 1.0
    if x > N:
        return 0.0
    # S_N >= x  <=>  ups >= (N + x) / 2
    return float(2.0 * binom.sf((N + x) // 2 - 1, N, 0.5))


def _quantile_step(cur: int, a_abs: int, u: float) -> int:
    """Float quantile transform: given |S_cur| = a_abs, return |S_{4cur}|."""
    hi = _abs_survival(cur, a_abs, strict=False)
    lo = _abs_survival(cur, a_abs, strict=True)
    w = lo + u * (hi - lo)
    # smallest even b >= 0 with P(|S_{4cur}| > b) <= w
    N = 4 * cur
    lo_b, hi_b = 0, N // 2
    while lo_b < hi_b:
        mid = (lo_b + hi_b) // 2
        if _abs_survival(N, 2 * mid, strict=True) <= w:
            hi_b = mid
        else:
            lo_b = mid + 1
    return 2 * lo_b


def chain_sample(n: int, depth: int, seed: int, table_limit: int = 2**15, sampling_fallback: bool = True) -> ChainTrajectory:
    """Sample (S_n, S_{4n}, ..., S_{4^depth n}) by composing the signed
    comonotone couplings; each step is checked against the integer form of
    the per-step inequalities."""
    if depth < 1:
        raise InvalidParameter("depth must be at least 1")
    if n < 2 or n % 2:
        raise InvalidParameter("the chain starts from an even n >= 2")
    rng = np.random.default_rng(seed)
    first = abs_walk_pmf(n, 2)
    u = Fraction(rng.random())
    if u == 0:
        u = Fraction(1, 2**60)
    from .exact import quantile

    a_half = int(quantile(first, u))  # |S_n| / 2
    sign = 1 if rng.random() < 0.5 else -1
    S = [sign * 2 * a_half]
    steps, methods = [], []
    cur = n
    for k in range(depth):
        nxt = 4 * cur
        a = abs(S[-1])
        if 2 * nxt + 1 <= table_limit:
            t = _cached_table(cur)
            row = t.row(a // 2)
            tot = sum(w for _, w in row)
            x = Fraction(rng.random()) * tot
            acc = 0
            for j, w in row:
                acc += w
                if x < acc:
                    break
            b = 2 * j
            methods.append("table")
        else:
            if not sampling_fallback:
                raise CapabilityError(f"exact table for n={nxt} exceeds table_limit={table_limit}")
            b = _quantile_step(cur, a, rng.random())
            methods.append("quantile")
        S.append(sign * b)
        u1, v1 = _pair_margins(cur, 2 * a, b)
        ok = u1 >= 0 and v1 >= 0
        if not ok and cur >= SIGNED_COUPLING_N0:
            raise AssertionError(f"per-step inequality failed at step {k}: S={S[-2]}, next={S[-1]}")
        steps.append({"k": k, "n": cur, "ok": ok, "margin_upper": int(u1), "margin_diff": float(v1)})
        cur = nxt
    Z = [s / math.sqrt(n * 4**k) for k, s in enumerate(S)]
    return ChainTrajectory(n, depth, S, Z, steps, methods)


_TABLES: dict = {}


def _cached_table(n: int) -> CouplingTable:
    t = _TABLES.get(n)
    if t is None:
        t = comonotone_couple(abs_walk_pmf(n, 4), abs_walk_pmf(4 * n, 2))
        _TABLES[n] = t
    return t
