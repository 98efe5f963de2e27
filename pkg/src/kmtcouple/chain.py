"""Joint nearest-neighbour chain on a product of two segments and its
stationary law, which couples the two marginal laws.

Both coordinates step together where their rates allow it:

    (i, j) -> (i+1, j+1)  at min(l+_i, m+_j)
    (i, j) -> (i+1, j)    at (l+_i - m+_j)_+
    (i, j) -> (i, j+1)    at (m+_j - l+_i)_+

and symmetrically downwards, with l+-_i = T_X(i) -+ i and m+-_j = T_Y(j) -+ j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import spsolve

from .exact import InvalidParameter, LatticePMF
from .stein import SteinCoefficient

RESIDUAL_TOL = 1e-10
MARGINAL_TOL = 1e-9
EXACT_SOLVE_LIMIT = 1500
FUNCTIONAL_TOL = 1e-10


class SolveError(RuntimeError):
    pass


@dataclass
class JointChainRates:
    Tx: SteinCoefficient
    pmf_x: LatticePMF
    Ty: SteinCoefficient
    pmf_y: LatticePMF

    def __post_init__(self):
        if self.Tx.offset != self.pmf_x.offset or len(self.Tx) != len(self.pmf_x):
            raise InvalidParameter("T_X does not match the first law")
        if self.Ty.offset != self.pmf_y.offset or len(self.Ty) != len(self.pmf_y):
            raise InvalidParameter("T_Y does not match the second law")
        self.lam_up, self.lam_down = self.Tx.rates()
        self.mu_up, self.mu_down = self.Ty.rates()

    @property
    def shape(self):
        return len(self.pmf_x), len(self.pmf_y)

    def exact_rates(self) -> dict:
        """The six rate arrays as nested tuples of Fractions."""
        def grid(f, a, b):
            return tuple(tuple(f(u, v) for v in b) for u in a)

        pos = lambda z: z if z > 0 else Fraction(0)
        return {
            "++": grid(min, self.lam_up, self.mu_up),
            "+o": grid(lambda u, v: pos(u - v), self.lam_up, self.mu_up),
            "o+": grid(lambda u, v: pos(v - u), self.lam_up, self.mu_up),
            "--": grid(min, self.lam_down, self.mu_down),
            "-o": grid(lambda u, v: pos(u - v), self.lam_down, self.mu_down),
            "o-": grid(lambda u, v: pos(v - u), self.lam_down, self.mu_down),
        }

    def float_rates(self) -> dict:
        lu = np.array([float(v) for v in self.lam_up])[:, None]
        ld = np.array([float(v) for v in self.lam_down])[:, None]
        mu = np.array([float(v) for v in self.mu_up])[None, :]
        md = np.array([float(v) for v in self.mu_down])[None, :]
        return {
            "++": np.minimum(lu, mu),
            "+o": np.maximum(lu - mu, 0.0),
            "o+": np.maximum(mu - lu, 0.0),
            "--": np.minimum(ld, md),
            "-o": np.maximum(ld - md, 0.0),
            "o-": np.maximum(md - ld, 0.0),
        }

    def drift_terms(self):
        """Exact A(i, j) and B(i, j) of the generator acting on functions of
        i - j (A = (l+ + m- - m+ - l-)/2, B = (|l+ - m+| + |l- - m-|)/2)."""
        A = tuple(
            tuple((lu + md - mu - ld) / 2 for mu, md in zip(self.mu_up, self.mu_down))
            for lu, ld in zip(self.lam_up, self.lam_down)
        )
        B = tuple(
            tuple((abs(lu - mu) + abs(ld - md)) / 2 for mu, md in zip(self.mu_up, self.mu_down))
            for lu, ld in zip(self.lam_up, self.lam_down)
        )
        return A, B


def build_joint_chain(Tx, pmf_x, Ty, pmf_y) -> JointChainRates:
    return JointChainRates(Tx, pmf_x, Ty, pmf_y)


_MOVES = {"++": (1, 1), "+o": (1, 0), "o+": (0, 1), "--": (-1, -1), "-o": (-1, 0), "o-": (0, -1)}


def _transitions(rates: dict, nx: int, ny: int):
    rows, cols, vals = [], [], []
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    for key, (di, dj) in _MOVES.items():
        r = rates[key]
        m = r > 0
        i2, j2 = I[m] + di, J[m] + dj
        if np.any((i2 < 0) | (i2 >= nx) | (j2 < 0) | (j2 >= ny)):
            raise SolveError("positive rate leaves the product grid")
        rows.append(I[m] * ny + J[m])
        cols.append(i2 * ny + j2)
        vals.append(r[m])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


@dataclass
class StationaryCoupling:
    rates: JointChainRates
    gamma: np.ndarray
    closed_classes: int
    class_size: int
    median_in_class: bool
    residual: float
    marginal_error: float
    exact_gamma: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def x_atoms(self) -> np.ndarray:
        return self.rates.pmf_x.float_atoms()

    @property
    def y_atoms(self) -> np.ndarray:
        return self.rates.pmf_y.float_atoms()

    def H(self) -> np.ndarray:
        """H = X - Y on the grid. Both supports are unit-spaced, so H is
        (i - j) plus the constant real shift between the two offsets."""
        shift = float(self.rates.pmf_x.offset - self.rates.pmf_y.offset)
        nx, ny = self.gamma.shape
        return shift + (np.arange(nx)[:, None] - np.arange(ny)[None, :]).astype(float)

    def Q(self) -> np.ndarray:
        tx = np.array([float(v) for v in self.rates.Tx.values])[:, None]
        ty = np.array([float(v) for v in self.rates.Ty.values])[None, :]
        return np.abs(ty - tx)

    def certified(self) -> bool:
        return (
            self.closed_classes == 1
            and self.median_in_class
            and self.residual <= RESIDUAL_TOL
            and self.marginal_error <= MARGINAL_TOL
        )

    def summary(self) -> dict:
        return {
            "states": int(self.gamma.size),
            "closed_classes": self.closed_classes,
            "class_size": self.class_size,
            "median_in_class": self.median_in_class,
            "residual": self.residual,
            "marginal_error": self.marginal_error,
            "certified": self.certified(),
        }


def solve_stationary(rates: JointChainRates, exact: bool = False, exact_limit: int = EXACT_SOLVE_LIMIT) -> StationaryCoupling:
    nx, ny = rates.shape
    N = nx * ny
    fr = rates.float_rates()
    r, c, v = _transitions(fr, nx, ny)
    adj = sp.csr_matrix((np.ones_like(v), (r, c)), shape=(N, N))
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    leaves = labels[r] != labels[c]
    has_exit = np.zeros(ncomp, dtype=bool)
    has_exit[labels[r[leaves]]] = True
    closed = np.nonzero(~has_exit)[0]
    # smaller medians of the two segments
    med = ((nx - 1) // 2) * ny + (ny - 1) // 2
    median_in = bool(len(closed) >= 1 and labels[med] in set(closed.tolist()))
    cls = labels[med] if median_in else closed[0]
    members = np.nonzero(labels == cls)[0]
    pos = -np.ones(N, dtype=np.int64)
    pos[members] = np.arange(members.size)

    G = sp.csr_matrix((v, (r, c)), shape=(N, N))
    out_rate = np.asarray(G.sum(axis=1)).ravel()
    G = (G - sp.diags(out_rate)).tocsr()
    Gc = G[members][:, members]
    A = Gc.T.tolil()
    A[members.size - 1, :] = np.ones(members.size)
    b = np.zeros(members.size)
    b[-1] = 1.0
    pi_c = spsolve(A.tocsc(), b) if members.size > 1 else np.ones(1)
    pi = np.zeros(N)
    pi[members] = pi_c
    residual = float(np.max(np.abs(G.T @ pi))) if N > 1 else 0.0
    gamma = pi.reshape(nx, ny)
    ex = rates.pmf_x.float_masses()
    ey = rates.pmf_y.float_masses()
    merr = float(max(np.max(np.abs(gamma.sum(axis=1) - ex)), np.max(np.abs(gamma.sum(axis=0) - ey))))
    sc = StationaryCoupling(rates, gamma, int(len(closed)), int(members.size), median_in, residual, merr)
    if exact:
        if members.size > exact_limit:
            raise SolveError(f"exact solve requested on {members.size} states (limit {exact_limit})")
        sc.exact_gamma = _exact_solve(rates, members, ny)
    return sc


def _exact_solve(rates: JointChainRates, members: np.ndarray, ny: int) -> dict:
    """Exact stationary law on the closed class by sparse Gaussian
    elimination over the rationals."""
    ex = rates.exact_rates()
    idx = {int(s): k for k, s in enumerate(members)}
    n = len(members)
    # balance equations: sum_s pi(s) G(s, t) = 0 for every t, as rows over t
    eqs = [dict() for _ in range(n)]
    for s_flat in members:
        s_flat = int(s_flat)
        i, j = divmod(s_flat, ny)
        ks = idx[s_flat]
        total = Fraction(0)
        for key, (di, dj) in _MOVES.items():
            rate = ex[key][i][j]
            if rate:
                kt = idx[(i + di) * ny + (j + dj)]
                eqs[kt][ks] = eqs[kt].get(ks, 0) + rate
                total += rate
        eqs[ks][ks] = eqs[ks].get(ks, 0) - total
    eqs[-1] = {k: Fraction(1) for k in range(n)}
    rhs = [Fraction(0)] * n
    rhs[-1] = Fraction(1)
    # forward elimination with the first available pivot per column
    rows = list(range(n))
    pivots = {}
    for col in range(n):
        piv = None
        for r in rows:
            if eqs[r].get(col):
                piv = r
                break
        if piv is None:
            raise SolveError("singular balance system")
        rows.remove(piv)
        pivots[col] = piv
        prow = eqs[piv]
        pv = prow[col]
        for r in rows:
            f = eqs[r].get(col)
            if f:
                fac = f / pv
                er = eqs[r]
                for kk, val in prow.items():
                    nv = er.get(kk, 0) - fac * val
                    if nv:
                        er[kk] = nv
                    else:
                        er.pop(kk, None)
                rhs[r] -= fac * rhs[piv]
    sol = [Fraction(0)] * n
    for col in range(n - 1, -1, -1):
        r = pivots[col]
        acc = rhs[r]
        for kk, val in eqs[r].items():
            if kk != col:
                acc -= val * sol[kk]
        sol[col] = acc / eqs[r][col]
    out = {}
    for k, s_flat in enumerate(members):
        if sol[k]:
            out[divmod(int(s_flat), ny)] = sol[k]
    return out


def exact_marginals_match(sc: StationaryCoupling) -> bool:
    nx, ny = sc.gamma.shape
    rx = [Fraction(0)] * nx
    ry = [Fraction(0)] * ny
    for (i, j), m in sc.exact_gamma.items():
        rx[i] += m
        ry[j] += m
    return tuple(rx) == sc.rates.pmf_x.masses and tuple(ry) == sc.rates.pmf_y.masses


def identity_residual(sc: StationaryCoupling, psi) -> float:
    """E[(Q - |H|)_+ (psi(H) - psi(H-1))] - 2 E[H_+ psi(H-1) - H_- psi(H)]
    under the computed coupling; zero for an exact stationary law."""
    H, Q, g = sc.H(), sc.Q(), sc.gamma
    lhs = np.sum(g * np.maximum(Q - np.abs(H), 0.0) * (psi(H) - psi(H - 1)))
    rhs = 2.0 * np.sum(g * (np.maximum(H, 0.0) * psi(H - 1) - np.maximum(-H, 0.0) * psi(H)))
    return float(lhs - rhs)


def _ok(lhs: float, rhs: float) -> bool:
    return lhs <= rhs + FUNCTIONAL_TOL * (1.0 + abs(rhs))


def coupling_functionals(sc: StationaryCoupling, theta: float, a=0, delta: float = 0.5, mu: float = 1.0) -> dict:
    """The three moment bounds on H = X - Y in terms of Q = |T_Y(Y) - T_X(X)|:

    tail:        P(|H| >= a+1) <= E[|H| 1{|H| >= a+1}]/(a+1) <= E[(Q-a)_+]/(a+1)
    expectation: E[exp(theta |H|)] <= 1 + E[Q (exp(theta Q) - 1)]
    exponential: E[exp(theta |H|)] <= (e^mu + (1-delta)/(mu delta e))
                                      * E[exp(e^theta theta^2 Q / (2(1-delta)))]
    """
    if theta < 0:
        raise InvalidParameter("theta must be nonnegative")
    if not 0 < delta < 1 or mu <= 0:
        raise InvalidParameter("need 0 < delta < 1 and mu > 0")
    H, Q, g = np.abs(sc.H()), sc.Q(), sc.gamma
    a_list = [a] if np.isscalar(a) else list(a)
    out = {"theta": theta, "delta": delta, "mu": mu, "tail": []}
    ok = True
    for aa in a_list:
        if aa < 0 or int(aa) != aa:
            raise InvalidParameter("a must be a nonnegative integer")
        ind = H >= aa + 1 - 1e-9
        p = float(np.sum(g[ind]))
        mid = float(np.sum((g * H)[ind])) / (aa + 1)
        rhs = float(np.sum(g * np.maximum(Q - aa, 0.0))) / (aa + 1)
        t_ok = _ok(p, mid) and _ok(mid, rhs)
        ok &= t_ok
        out["tail"].append({"a": int(aa), "prob": p, "middle": mid, "bound": rhs, "margin": rhs - p, "pass": t_ok})
    eh = float(np.sum(g * np.exp(theta * H)))
    rhs2 = 1.0 + float(np.sum(g * Q * np.expm1(theta * Q)))
    const = math.exp(mu) + (1.0 - delta) / (mu * delta * math.e)
    with np.errstate(over="ignore", invalid="ignore"):
        rhs3 = const * float(np.sum(g * np.exp(math.exp(theta) * theta**2 * Q / (2.0 * (1.0 - delta)))))
    if math.isnan(rhs3):
        rhs3 = math.inf
    out["expectation"] = {"lhs": eh, "bound": rhs2, "margin": rhs2 - eh, "pass": _ok(eh, rhs2)}
    out["exponential"] = {"lhs": eh, "bound": rhs3, "margin": rhs3 - eh, "pass": _ok(eh, rhs3)}
    supp = g > 0
    integral = bool(
        np.all(np.abs(H[supp] - np.round(H[supp])) < 1e-9) and np.all(np.abs(Q[supp] - np.round(Q[supp])) < 1e-9)
    )
    out["expectation"]["integer_valued"] = integral
    ok_rest = ok and out["exponential"]["pass"]
    out["pass"] = bool(ok_rest and out["expectation"]["pass"])
    out["pass_applicable"] = bool(ok_rest and (out["expectation"]["pass"] or not integral))
    return out
