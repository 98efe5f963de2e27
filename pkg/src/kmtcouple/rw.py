"""Recursive coupling of a Bernoulli walk bridge with a Gaussian bridge.

For a segment of length L with walk increment t, the value of the walk at
k = floor(L/2) is coupled with the Gaussian bridge value there by the
quantile transform of one uniform (s ~ S_k[L, t], v ~ N(0, k(L-k)/L)); the
two halves are then built independently. Segments of length <= 5 draw the
walk from its exact conditional law and an independent bridge.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels as K
from ._jit import BACKEND, USE_NUMBA
from ._parallel import ordered_map
from ._rng import derive_key, generator_uniform, uniforms_np
from .ep import linear_fit
from .exact import InvalidParameter

STREAM_BRIDGE_MODE = 2
STREAM_FULL_MODE = 3
STREAM_GAUSS_BRIDGE = 4
BASE_MAX = K.BASE_MAX

A_MIN = (1.0 + math.log(2.0)) / math.log(1.5)


@dataclass(frozen=True)
class InductionConfig:
    """Constants of the induction bound E[e^{lambda T}] <= e^{A log n + B lambda^2 t^2/n}.

    theta1 and M describe the midpoint coupling (E[e^{theta R}] <= e^{1 + M theta^2 t^2/n}
    for theta <= theta1); gamma and alpha0 the square-exponential moment of
    the sample sum (E[e^{(alpha/k) S_k^2}] <= e^{1 + gamma alpha t^2/n},
    alpha <= alpha0, k <= 2n/3).
    """

    A: float
    B: float
    lambda0: float
    theta1: float
    M: float
    gamma: float
    alpha0: float

    def violations(self) -> list:
        out = []
        if min(self.A, self.B, self.lambda0, self.theta1, self.gamma, self.alpha0) <= 0 or self.M < 0:
            out.append("constants must be positive (M nonnegative)")
        if not self.gamma < 1:
            out.append("gamma must be < 1")
        if self.A < A_MIN:
            out.append(f"A must be >= (1 + log 2)/log(3/2) = {A_MIN:.6f}")
        if self.gamma < 1 and self.B < 2 * self.M / (1 - self.gamma):
            out.append("B must be >= 2M/(1 - gamma)")
        cap = min(self.theta1 / 2, math.sqrt(self.alpha0 / (2 * self.B))) if self.B > 0 else self.theta1 / 2
        if self.lambda0 > cap + 1e-15:
            out.append(f"lambda0 must be <= min(theta1/2, sqrt(alpha0/(2B))) = {cap:.6g}")
        return out

    def validate(self) -> "InductionConfig":
        v = self.violations()
        if v:
            raise InvalidParameter("; ".join(v))
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def calibrated(cls, Theta_hat: float, M_hat: float, B: float = 1.0, A: float | None = None) -> "InductionConfig":
        """Constants from the sample-sum coupling sweep: theta1 = Theta_hat/2 and
        M = 2 M_hat (the Cauchy-Schwarz step that passes to the Gaussian);
        gamma = 8/9, alpha0 = 1/8 from the square-exponential bound
        (1 - 2b)^{-1/2} exp{b/(1 - 2b) (k/n) t^2/n} with k <= 2n/3, b <= 1/8."""
        theta1 = Theta_hat / 2
        M = 2 * M_hat
        gamma, alpha0 = 8.0 / 9.0, 1.0 / 8.0
        B = max(B, 2 * M / (1 - gamma))
        lam0 = min(theta1 / 2, math.sqrt(alpha0 / (2 * B)))
        return cls(A if A is not None else A_MIN, B, lam0, theta1, M, gamma, alpha0).validate()


# Theta_hat = 0.21 and M_hat = 0 from the default sample-sum sweep.
DEFAULT_CONFIG = InductionConfig.calibrated(0.21, 0.0)


@dataclass(frozen=True)
class GaussianBridge:
    n: int
    values: np.ndarray


@dataclass(frozen=True)
class CoupledPaths:
    n: int
    t: int
    S: np.ndarray
    V: np.ndarray
    T_star: float
    node_R: np.ndarray
    node_T: np.ndarray
    pathwise_violations: int
    Z: float = 0.0

    def check(self) -> bool:
        steps = np.diff(self.S)
        return bool(self.S[0] == 0 and self.S[-1] == self.t and np.all(np.abs(steps) == 1)
                    and self.V[0] == 0.0 and self.V[-1] == 0.0)


def sample_bridge(n: int, seed: int, rep: int = 0) -> GaussianBridge:
    """V_i = P_i - (i/n) P_n with P the partial sums of n standard normals."""
    if n < 1:
        raise InvalidParameter("n must be positive")
    key = derive_key(seed, STREAM_GAUSS_BRIDGE, n, rep)
    g = K.ndtri_np(uniforms_np(key, np.arange(n)))
    P = np.concatenate(([0.0], np.cumsum(g)))
    i = np.arange(n + 1)
    V = P - (i / n) * P[-1]
    V[-1] = 0.0
    return GaussianBridge(n, V)


def _check_endpoint(n: int, t: int):
    if n < 1:
        raise InvalidParameter("n must be positive")
    if abs(t) > n or (n + t) % 2:
        raise InvalidParameter(f"t={t} is not a possible value of S_{n}")


def hypergeo_gauss_couple(n: int, t: int, k: int, rng: np.random.Generator, size=None):
    """Quantile coupling of s ~ S_k[n, t] with v ~ N(0, k(n-k)/n) through
    one uniform. Returns (s, v, R_c) with R_c = |s - kt/n - v|."""
    _check_endpoint(n, t)
    if not (n / 3 <= k <= 2 * n / 3):
        raise InvalidParameter("k must lie in [n/3, 2n/3]")
    u = generator_uniform(rng, size)
    v = math.sqrt(k * (n - k) / n) * K.ndtri_np(np.atleast_1d(u))
    x = K.hyper_quantile_np(n, (n + t) // 2, k, np.atleast_1d(u))
    s = 2 * x - k
    R = np.abs(s - k * t / n - v)
    if size is None:
        return int(s[0]), float(v[0]), float(R[0])
    return s, v, R


def _plan(n):
    A, B, H, _ = K.segment_plan(n)
    return A, B, H


def path_key(seed: int, n: int, t: int, rep: int, full: bool) -> int:
    if full:
        return derive_key(seed, STREAM_FULL_MODE, n, rep)
    return derive_key(seed, STREAM_BRIDGE_MODE, n, t + n, rep)


def recursive_couple(n: int, t: int, seed: int, rep: int = 0) -> CoupledPaths:
    _check_endpoint(n, t)
    A, B, H = _plan(n)
    key = path_key(seed, n, t, rep, False)
    if USE_NUMBA:
        S, V, Z, Rc, T, bad = K.rw_path_nb(n, t, np.uint64(key), False, A, B, H)
    else:
        S, V, Z, Rc, T, bad = K.rw_paths_np(n, t, [key], False, A, B, H)
        S, V, Rc, T, bad = S[0], V[0], Rc[0], T[0], int(bad[0])
    i = np.arange(n + 1)
    T_star = float(np.max(np.abs(S - i * t / n - V)))
    return CoupledPaths(n, t, S, V, T_star, Rc, T, int(bad))


def _rw_batch(job):
    n, t, seed, lo, hi, full = job
    keys = np.array([path_key(seed, n, t, r, full) for r in range(lo, hi)], dtype=np.uint64)
    A, B, H = _plan(n)
    if USE_NUMBA:
        return K.rw_batch_nb(n, t, keys, full, A, B, H)
    return K.rw_batch_np(n, t, keys, full, A, B, H)


def rw_samples(n: int, t: int, reps: int, seed: int, full: bool, jobs: int = 1) -> np.ndarray:
    """Per-replicate rows (T*, max |S_k - W(k)|, root R_c, Z, pathwise
    violations)."""
    if not full:
        _check_endpoint(n, t)
    chunk = max(1, -(-reps // max(1, jobs)))
    jobs_list = [(n, t, seed, lo, min(reps, lo + chunk), full) for lo in range(0, reps, chunk)]
    parts = ordered_map(_rw_batch, jobs_list, jobs)
    return np.concatenate(parts) if parts else np.zeros((0, 5))


def default_t_values(n: int) -> list:
    """The smallest endpoint n mod 2 and the values of the right parity
    nearest sqrt(n) and 2 sqrt(n)."""
    out = [n % 2]
    for c in (1.0, 2.0):
        t = int(round(c * math.sqrt(n)))
        if (t + n) % 2:
            t += 1
        out.append(min(t, n))
    return sorted(set(out))


def _log_mean_exp(lam: float, x: np.ndarray) -> float:
    a = lam * x
    mx = float(a.max())
    return mx + math.log(float(np.mean(np.exp(a - mx))))


def run_rw_experiment(n_list, lambda_list, reps: int, seed: int, mode: str = "bridge", t_values=None,
                      config: InductionConfig = DEFAULT_CONFIG, allow_above_lambda0: bool = False,
                      jobs: int = 1, min_reps: int = 100) -> dict:
    """Bridge mode: E[e^{lambda T*}] per (n, t, lambda), smallest passing A
    (from t = n mod 2) and B, and the fit log E[e^{lambda T*}] ~ a + b log n
    at t = n mod 2.
    Full mode: S_n coupled to Z, W(k) = V_k + (k/n) sqrt(n) Z, fit of the mean
    of max_k |S_k - W(k)| against log n. Fits are judged only when at
    least two n are given."""
    if reps < min_reps or reps < 1:
        raise InvalidParameter(f"reps must be at least {min_reps}")
    if mode not in ("bridge", "full"):
        raise InvalidParameter("mode must be 'bridge' or 'full'")
    lambda_list = [float(x) for x in lambda_list]
    if any(lam < 0 for lam in lambda_list):
        raise InvalidParameter("lambda must be nonnegative")
    above = [lam for lam in lambda_list if lam > config.lambda0]
    if above and not allow_above_lambda0:
        raise InvalidParameter(f"lambda {above} exceeds lambda0 = {config.lambda0:.6g} of the induction config")
    n_list = sorted(int(n) for n in n_list)
    out = {
        "experiment": "random_walk_embedding",
        "mode": mode,
        "backend": BACKEND,
        "seed": seed,
        "reps": reps,
        "config": config.to_dict(),
        "lambda_above_lambda0": above,
    }
    rows, per = [], []
    total_bad = 0
    if mode == "bridge":
        for n in n_list:
            for t in (t_values if t_values is not None else default_t_values(n)):
                X = rw_samples(n, t, reps, seed, False, jobs)
                total_bad += int(X[:, 4].sum())
                entry = {"n": n, "t": t, "mean_T_star": float(X[:, 0].mean()),
                         "median_T_star": float(np.median(X[:, 0])), "pathwise_violations": int(X[:, 4].sum()),
                         "log_mgf": {}}
                for lam in lambda_list:
                    entry["log_mgf"][repr(lam)] = _log_mean_exp(lam, X[:, 0])
                per.append(entry)
                rows += [{"n": n, "t": t, "rep": r, "T_star": float(X[r, 0])} for r in range(reps)]
        fits, A_hat, B_hat = {}, {}, {}
        for lam in lambda_list:
            key = repr(lam)
            zero = [e for e in per if e["t"] == e["n"] % 2]
            if lam > 0 and len(zero) >= 2:
                fits[key] = linear_fit([math.log(e["n"]) for e in zero], [e["log_mgf"][key] for e in zero])
            a = max((e["log_mgf"][key] / math.log(e["n"]) for e in zero if e["n"] > 1), default=0.0)
            A_hat[key] = max(a, 0.0)
            b = 0.0
            for e in per:
                if e["t"] != e["n"] % 2 and lam > 0:
                    need = e["log_mgf"][key] - A_hat[key] * math.log(e["n"])
                    b = max(b, need / (lam * lam * e["t"] ** 2 / e["n"]))
            B_hat[key] = b
        medians = {}
        for e in per:
            if e["t"] == e["n"] % 2:
                medians[e["n"]] = e["median_T_star"]
        ns = sorted(medians)
        out.update(
            per_n_t=per,
            fit_log_mgf_t0=fits,
            A_hat=A_hat,
            B_hat=B_hat,
            median_nondecreasing_t0=all(medians[a] <= medians[b] for a, b in zip(ns, ns[1:])),
        )
        ok_fit = all(f["r2"] >= 0.9 for f in fits.values())
    else:
        for n in n_list:
            X = rw_samples(n, 0, reps, seed, True, jobs)
            total_bad += int(X[:, 4].sum())
            per.append({"n": n, "mean_max_dev": float(X[:, 1].mean()), "sd_max_dev": float(X[:, 1].std(ddof=1)),
                        "q90_max_dev": float(np.quantile(X[:, 1], 0.9)), "mean_T_star": float(X[:, 0].mean()),
                        "pathwise_violations": int(X[:, 4].sum())})
            rows += [{"n": n, "rep": r, "max_dev": float(X[r, 1])} for r in range(reps)]
        fit = linear_fit([math.log(e["n"]) for e in per], [e["mean_max_dev"] for e in per]) if len(per) >= 2 else None
        out.update(per_n=per, fit_mean_max_dev_vs_log_n=fit)
        ok_fit = fit is None or fit["r2"] >= 0.95
    out["pathwise_violations"] = total_bad
    out["pass"] = bool(ok_fit and total_bad == 0)
    out["rows"] = rows
    return out
