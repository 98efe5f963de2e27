"""Couplings built from stationary joint chains, with the exact functionals
they are meant to control, plus Hoeffding's with/without replacement
comparison."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import partial

import numpy as np

from ._parallel import ordered_map
from .chain import build_joint_chain, coupling_functionals, exact_marginals_match, solve_stationary
from .exact import (
    InvalidParameter,
    LatticePMF,
    binomial_row,
    make_centered_binomial,
    make_hypergeometric,
    make_walk_pmf,
    perturb_scale,
)
from .stein import stein_binomial, stein_from_pmf, stein_hypergeometric, stein_scale_perturb

R_PROBS = {-1: 0.25, 0: 0.5, 1: 0.25}
THETA_GRID = tuple(round(0.01 * i, 2) for i in range(1, 51))
SLACK = 1e-12


def admissible_theta(theta: float) -> bool:
    """8 theta^2 e^{2 theta} < 1."""
    return theta > 0 and 8.0 * theta**2 * math.exp(2.0 * theta) < 1.0


def _posterior_r(Y: LatticePMF, base: LatticePMF) -> np.ndarray:
    """P(R = r | 2V + R = y) for r = -1, 0, 1 (columns), V ~ base."""
    ys = Y.atoms
    out = np.zeros((len(ys), 3))
    for j, y in enumerate(ys):
        w = [R_PROBS[r] * float(base.mass((y - r) / 2)) for r in (-1, 0, 1)]
        tot = sum(w)
        out[j] = [x / tot for x in w]
    return out


def _deperturbed_functional(sc, base: LatticePMF, thetas) -> np.ndarray:
    """E[exp(theta |2(Y - R) - 2X|)] where R is resampled from its posterior
    given Y; the exact law of the unperturbed pair (X, (Y-R)/2)."""
    post = _posterior_r(sc.rates.pmf_y, base)
    x = sc.x_atoms[:, None]
    y = sc.y_atoms[None, :]
    g = sc.gamma
    out = []
    for th in np.atleast_1d(thetas):
        acc = 0.0
        for c, r in enumerate((-1, 0, 1)):
            acc += np.sum(g * post[None, :, c] * np.exp(th * np.abs(2.0 * (y - r) - 2.0 * x)))
        out.append(float(acc))
    return np.array(out)


def _functional_checks(sc, thetas, a_values, key="pass"):
    reps = [coupling_functionals(sc, th, a_values) for th in thetas]
    return reps, all(r[key] for r in reps)


@dataclass
class CouplingReport:
    data: dict

    @property
    def passed(self) -> bool:
        return bool(self.data["pass"])


def couple_binomials(n: int, theta: float, a_values=(0, 1, 2, 3), exact_limit: int | None = None) -> CouplingReport:
    """Couple S_{4n}/2 with S_n + R through the joint chain and evaluate
    E[exp(theta |2 S_n - S_{4n}|)] exactly (R removed by Bayes' rule).
    With ``exact_limit`` the closed class is also solved in rationals and
    its marginals compared exactly."""
    if n < 1:
        raise InvalidParameter("n must be positive")
    if not admissible_theta(theta):
        raise InvalidParameter(f"theta={theta} is not admissible (need 8 theta^2 e^(2 theta) < 1)")
    X = make_walk_pmf(4 * n)
    base = make_walk_pmf(n)
    Y = perturb_scale(base)
    Tx = stein_from_pmf(X)
    Ty = stein_scale_perturb(stein_from_pmf(base), base)
    sc = _solve(build_joint_chain(Tx, X, Ty, Y), exact_limit)
    F = float(_deperturbed_functional(sc, base, [theta])[0])
    H = np.abs(sc.H())
    hat_bound = math.exp(2 * theta) * float(np.sum(sc.gamma * np.exp(2 * theta * H)))
    checks, ok = _functional_checks(sc, [theta, 2 * theta], a_values)
    data = {
        "n": n,
        "theta": theta,
        "functional": F,
        "hat_bound": hat_bound,
        "hat_bound_pass": F <= hat_bound * (1 + SLACK),
        "solve": sc.summary(),
        "functional_checks": checks,
        "functional_checks_pass": ok,
    }
    data["pass"] = bool(sc.certified() and ok and data["hat_bound_pass"])
    _add_exact(data, sc)
    return CouplingReport(data)


def _solve(rates, exact_limit):
    if exact_limit is None:
        return solve_stationary(rates)
    return solve_stationary(rates, exact=True, exact_limit=exact_limit)


def _add_exact(data: dict, sc):
    if sc.exact_gamma is not None:
        data["exact_marginals_match"] = exact_marginals_match(sc)
        data["pass"] = bool(data["pass"] and data["exact_marginals_match"])


def binomial_scaling_sweep(n_max: int = 64, theta: float = 0.25, jobs: int = 1) -> dict:
    reps = ordered_map(partial(_scaling_one, theta=theta), range(1, n_max + 1), jobs)
    vals = [r["functional"] for r in reps]
    q = max(1, n_max // 4)
    last = vals[-q:]
    variation = (max(last) - min(last)) / max(last)
    return {
        "check": "binomial_scaling_coupling",
        "theta": theta,
        "n_range": [1, n_max],
        "kappa0_hat": max(vals),
        "last_quarter_variation": variation,
        "plateau_pass": variation < 0.05,
        "all_instances_pass": all(r["pass"] for r in reps),
        "pass": variation < 0.05 and all(r["pass"] for r in reps),
        "instances": reps,
    }


def _scaling_one(n, theta):
    return couple_binomials(n, theta).data


# Sample sums without replacement.

def _hyper_part1(n: int, k: int, exact_limit=None):
    X = make_hypergeometric(4 * n, 4 * k, 0, centered=True)
    base = make_hypergeometric(n, k, 0, centered=True)
    Y = perturb_scale(base)
    Tx = stein_hypergeometric(4 * n, 4 * k, 0)
    Ty = stein_scale_perturb(stein_hypergeometric(n, k, 0), base)
    return _solve(build_joint_chain(Tx, X, Ty, Y), exact_limit), base


def _hyper_part2(n: int, k: int, s: int, exact_limit=None):
    X = make_hypergeometric(n, k, 0, centered=True)
    Y = make_hypergeometric(n, k, s, centered=True)
    return _solve(build_joint_chain(stein_hypergeometric(n, k, 0), X, stein_hypergeometric(n, k, s), Y), exact_limit)


def _check_hyper_args(n, k, s):
    if n < 2 or n % 2:
        raise InvalidParameter("n must be even and at least 2")
    if not (n <= 3 * k and 3 * k <= 2 * n):
        raise InvalidParameter("k must lie in [n/3, 2n/3]")
    if abs(s) > n or (n + s) % 2:
        raise InvalidParameter("s is not a probable value of S_n")


def couple_hypergeos(n: int, k: int, s: int, thetas=THETA_GRID, part: int = 1, a_values=(0, 1, 2),
                     exact_limit: int | None = None) -> CouplingReport:
    """Part 1: couple W1 = S_k[n,0] with W2 = S_{4k}[4n,0]; returns
    E[exp(theta |2 W1 - W2|)] for each theta. Part 2: couple W1 with
    W = S_k[n,s] - sk/n; returns E[exp(theta |W1 - W|)]."""
    _check_hyper_args(n, k, s)
    thetas = [float(t) for t in np.atleast_1d(thetas)]
    if part == 1:
        sc, base = _hyper_part1(n, k, exact_limit)
        F = _deperturbed_functional(sc, base, thetas)
    elif part == 2:
        sc = _hyper_part2(n, k, s, exact_limit)
        H = np.abs(sc.H())
        F = np.array([float(np.sum(sc.gamma * np.exp(2.0 * th * H))) for th in thetas])
    else:
        raise InvalidParameter("part must be 1 or 2")
    check_thetas = [thetas[0], thetas[-1]]
    checks, ok = _functional_checks(sc, check_thetas, a_values, key="pass_applicable")
    data = {
        "n": n,
        "k": k,
        "s": s,
        "part": part,
        "thetas": thetas,
        "functional": F.tolist(),
        "solve": sc.summary(),
        "functional_checks": checks,
        "functional_checks_pass": ok,
        "expectation_bound_strict": all(c["expectation"]["pass"] for c in checks),
    }
    data["pass"] = bool(sc.certified() and ok)
    _add_exact(data, sc)
    return CouplingReport(data)


def _sample_sum_p1(n, thetas):
    return couple_hypergeos(n, n // 2, 0, thetas, part=1).data


def _sample_sum_p2(args, thetas):
    n, k, s = args
    return couple_hypergeos(n, k, s, thetas, part=2).data


def sample_sum_sweep(n_values=tuple(range(6, 49, 2)), thetas=THETA_GRID, jobs: int = 1) -> dict:
    """Discover Theta_hat (largest grid theta below which the part-1
    functional stays <= 3/2 for every n) and M_hat (smallest M with
    E[exp(theta|W1 - W|)] <= exp(1 + M theta^2 s^2/n) on every tested
    instance with theta <= Theta_hat)."""
    thetas = sorted(float(t) for t in thetas)
    p1 = ordered_map(partial(_sample_sum_p1, thetas=thetas), list(n_values), jobs)
    worst = np.max(np.array([r["functional"] for r in p1]), axis=0)
    theta_hat = None
    for th, v in zip(thetas, worst):
        if v > 1.5:
            break
        theta_hat = th
    args = []
    for n in n_values:
        ks = sorted({-(-n // 3), n // 2, (2 * n) // 3})
        for k in ks:
            for s in range(-n, n + 1, 2):
                args.append((n, k, s))
    use = [t for t in thetas if theta_hat is not None and t <= theta_hat]
    p2 = ordered_map(partial(_sample_sum_p2, thetas=use or thetas[:1]), args, jobs)
    m_hat = 0.0
    max_s0 = 1.0
    for r in p2:
        n, s = r["n"], r["s"]
        for th, F in zip(r["thetas"], r["functional"]):
            if s == 0:
                max_s0 = max(max_s0, F)
                continue
            m_hat = max(m_hat, (math.log(F) - 1.0) / (th * th * s * s / n))
    part2_ok = max_s0 <= math.e and all(r["pass"] for r in p2) and math.isfinite(m_hat)
    return {
        "check": "sample_sum_couplings",
        "theta_grid": thetas,
        "n_values": list(n_values),
        "Theta_hat": theta_hat,
        "part1_worst_functional": worst.tolist(),
        "part1_pass": theta_hat is not None and theta_hat >= 0.01 and all(r["pass"] for r in p1),
        "M_hat": m_hat,
        "part2_max_functional_s0": max_s0,
        "part2_instances": len(p2),
        "part2_pass": bool(part2_ok),
        "pass": bool(theta_hat is not None and theta_hat >= 0.01 and part2_ok and all(r["pass"] for r in p1)),
        "part1_instances": p1,
        "part2_worst": sorted(
            (
                {"n": r["n"], "k": r["k"], "s": r["s"], "max_functional": max(r["functional"])}
                for r in p2
            ),
            key=lambda d: -d["max_functional"],
        )[:10],
    }


# Corpus of stationary solves.

def _corpus_pairs(n_max_binomial: int, n_max_hyper: int):
    """(label, params, X, Tx, Y, Ty) for every coupling the package solves,
    plus identical-law pairs whose coupling must sit on the diagonal."""
    half = Fraction(1, 2)
    for n in range(1, n_max_binomial + 1):
        base = make_walk_pmf(n)
        X = make_walk_pmf(4 * n)
        yield "walk_scaling", (n,), X, stein_from_pmf(X), perturb_scale(base), None
    for n in range(6, n_max_hyper + 1, 2):
        k = n // 2
        base = make_hypergeometric(n, k, 0, centered=True)
        X = make_hypergeometric(4 * n, 4 * k, 0, centered=True)
        Ty = stein_scale_perturb(stein_hypergeometric(n, k, 0), base)
        yield "sample_sum_scaling", (n, k), X, stein_hypergeometric(4 * n, 4 * k, 0), perturb_scale(base), Ty
    for n in range(6, min(n_max_hyper, 24) + 1, 6):
        for k in sorted({-(-n // 3), n // 2, (2 * n) // 3}):
            X = make_hypergeometric(n, k, 0, centered=True)
            for s_ in range(-n + 2, n - 1, 2):
                Y = make_hypergeometric(n, k, s_, centered=True)
                yield "sample_sum_shift", (n, k, s_), X, stein_hypergeometric(n, k, 0), Y, stein_hypergeometric(n, k, s_)
    for n in range(2, n_max_binomial + 1, 2):
        X = make_centered_binomial(n, half)
        T = stein_binomial(n, half)
        yield "identical_binomial", (n,), X, T, X, T
    for n in range(4, min(n_max_hyper, 24) + 1, 4):
        X = make_hypergeometric(n, n // 2, 2, centered=True)
        T = stein_hypergeometric(n, n // 2, 2)
        yield "identical_sample_sum", (n, n // 2, 2), X, T, X, T


def _corpus_one(item):
    label, params, X, Tx, Y, Ty = item
    if Ty is None:
        Ty = stein_from_pmf(Y)
    sc = solve_stationary(build_joint_chain(Tx, X, Ty, Y))
    row = {"family": label, "params": list(params), **sc.summary()}
    if label.startswith("identical"):
        p0 = float(np.sum(np.diag(sc.gamma)))
        row["p_diagonal"] = p0
        row["certified"] = bool(row["certified"] and p0 >= 1.0 - 1e-12)
    return row


def stationary_corpus(max_states: int = 10**4, n_max_binomial: int = 64, n_max_hyper: int = 48, jobs: int = 1) -> dict:
    """Solve every corpus coupling with at most ``max_states`` grid states
    and certify it: one closed class through the medians, balance residual
    <= 1e-10, marginal error <= 1e-9, and mass >= 1 - 1e-12 on the diagonal
    for identical laws."""
    items = [it for it in _corpus_pairs(n_max_binomial, n_max_hyper) if len(it[2]) * len(it[4]) <= max_states]
    rows = ordered_map(_corpus_one, items, jobs)
    fams = {}
    for r in rows:
        f = fams.setdefault(r["family"], {"instances": 0, "failures": 0, "max_states": 0})
        f["instances"] += 1
        f["failures"] += 0 if r["certified"] else 1
        f["max_states"] = max(f["max_states"], r["states"])
    return {
        "check": "stationary_couplings",
        "max_states": max_states,
        "families": fams,
        "instances": len(rows),
        "max_residual": max(r["residual"] for r in rows),
        "max_marginal_error": max(r["marginal_error"] for r in rows),
        "min_p_diagonal": min(r["p_diagonal"] for r in rows if "p_diagonal" in r),
        "failures": [r for r in rows if not r["certified"]][:20],
        "pass": all(r["certified"] for r in rows),
    }


# Hoeffding comparison.

LAMBDAS = (-2.0, -1.0, -0.25, 0.5, 1.0, 2.0)
AB_PAIRS = tuple((a, b) for a in (-1.0, 0.0, 1.5) for b in (0.0, 0.2, 0.45))
B_VALUES = (0.05, 0.2, 0.45)


def _laws(n: int, k: int, p: Fraction):
    """Values and masses of S'_k (without replacement) and S_k (with)."""
    s = int(n * (2 * p - 1))
    h = make_hypergeometric(n, k, s)
    xs_h = 2.0 * h.float_atoms() - k
    # Bin(k, p) need not have an integer mean, so it is built directly
    row = binomial_row(k)
    a, d = p.numerator, p.denominator
    wb = [row[j] * a**j * (d - a) ** (k - j) for j in range(k + 1)]
    tot = d**k
    keep = [j for j in range(k + 1) if wb[j] > 0]
    xs_b = np.array([2.0 * j - k for j in keep])
    ms_b = np.array([wb[j] / tot for j in keep])
    return xs_h, h.float_masses(), xs_b, ms_b


def hoeffding_bounds_check(n: int, k: int, p, lambdas=LAMBDAS, ab_pairs=AB_PAIRS, b_values=B_VALUES) -> dict:
    """E f(W'_k) <= E f(W_k) <= bound for the three functional families,
    where W = S - k(p - q) and S' / S sum k draws without / with replacement
    from n coupons of which np are +1."""
    p = Fraction(p)
    if not 0 <= p <= 1 or (n * p).denominator != 1:
        raise InvalidParameter("np must be an integer with p in [0, 1]")
    if not 1 <= k <= n:
        raise InvalidParameter("need 1 <= k <= n")
    for _, b in ab_pairs:
        if not 0 <= b < 0.5:
            raise InvalidParameter("b must lie in [0, 1/2)")
    for b in b_values:
        if not 0 <= b < 0.5:
            raise InvalidParameter("b must lie in [0, 1/2)")
    s = n * (2 * p - 1)
    mean = k * float(2 * p - 1)
    xh, mh, xb, mb = _laws(n, k, p)
    wh, wb = xh - mean, xb - mean
    rk = math.sqrt(k)
    rows = []

    def chain(kind, params, f, bound):
        e1 = float(np.dot(mh, f(wh)))
        e2 = float(np.dot(mb, f(wb)))
        ok = e1 <= e2 * (1 + SLACK) and e2 <= bound * (1 + SLACK)
        rows.append({"family": kind, "params": params, "without": e1, "with": e2, "bound": bound, "pass": ok})

    for lam in lambdas:
        chain("exp", {"lambda": lam}, lambda w: np.exp(lam * w), math.exp(0.5 * lam * lam * k))
    for a, b in ab_pairs:
        chain(
            "quad_exp",
            {"a": a, "b": b},
            lambda w: np.exp(a * w / rk + b * w * w / k),
            math.exp(a * a / (2 * (1 - 2 * b))) / math.sqrt(1 - 2 * b),
        )
    for b in b_values:
        chain(
            "square_exp",
            {"b": b},
            lambda w: np.exp(b * (w + mean) ** 2 / k),
            math.exp(b / (1 - 2 * b) * (k / n) * float(s) ** 2 / n) / math.sqrt(1 - 2 * b),
        )
    return {"n": n, "k": k, "p": f"{p.numerator}/{p.denominator}", "rows": rows, "pass": all(r["pass"] for r in rows)}


def _hoeffding_n(n):
    bad, count = [], 0
    for k in range(1, n + 1):
        for j in range(n + 1):
            r = hoeffding_bounds_check(n, k, Fraction(j, n))
            count += len(r["rows"])
            bad.extend({"n": n, "k": k, "p": r["p"], **row} for row in r["rows"] if not row["pass"])
    return {"n": n, "checks": count, "violations": bad}


def hoeffding_sweep(n_max: int = 40, jobs: int = 1) -> dict:
    res = ordered_map(_hoeffding_n, range(1, n_max + 1), jobs)
    viol = [v for r in res for v in r["violations"]]
    return {
        "check": "hoeffding_comparison",
        "n_range": [1, n_max],
        "lambdas": list(LAMBDAS),
        "ab_pairs": [list(x) for x in AB_PAIRS],
        "b_values": list(B_VALUES),
        "checks": sum(r["checks"] for r in res),
        "violation_count": len(viol),
        "violations": viol[:50],
        "pass": not viol,
    }
