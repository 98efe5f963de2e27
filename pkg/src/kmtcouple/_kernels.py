"""Monte Carlo kernels, each in a compiled (``*_nb``) and a vectorized
numpy (``*_np``) form running the same arithmetic:

- counter-based uniforms and the AS241 normal quantile,
- quantiles of Binomial(N, 1/2) and of the hypergeometric count,
- the dyadic count tree and its deviation statistics,
- the recursive walk-bridge / Gaussian-bridge construction.

Discrete quantiles invert the CDF by the pmf recurrence started 10
standard deviations below the mean (mass further out is below 1e-23, far
under the 2^-52 resolution of the uniforms). Above the median the
reflected law is inverted so both tails are resolved to full precision.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ._jit import njit
from ._rng import GOLDEN, _M1, _M2

LN2 = math.log(2.0)
SLACK = 1e-9

_U_GOLDEN = np.uint64(GOLDEN)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U1 = np.uint64(1)
_U12 = np.uint64(12)
_U27 = np.uint64(27)
_U30 = np.uint64(30)
_U31 = np.uint64(31)

# AS241 (PPND16) coefficients, highest degree first.
_A = (2.5090809287301226727e3, 3.3430575583588128105e4, 6.7265770927008700853e4, 4.5921953931549871457e4,
      1.3731693765509461125e4, 1.9715909503065514427e3, 1.3314166789178437745e2, 3.3871328727963666080e0)
_B = (5.2264952788528545610e3, 2.8729085735721942674e4, 3.9307895800092710610e4, 2.1213794301586595867e4,
      5.3941960214247511077e3, 6.8718700749205790830e2, 4.2313330701600911252e1, 1.0)
_C = (7.74545014278341407640e-4, 2.27238449892691845833e-2, 2.41780725177450611770e-1, 1.27045825245236838258e0,
      3.64784832476320460504e0, 5.76949722146069140550e0, 4.63033784615654529590e0, 1.42343711074968357734e0)
_D = (1.05075007164441684324e-9, 5.47593808499534494600e-4, 1.51986665636164571966e-2, 1.48103976427480074590e-1,
      6.89767334985100004550e-1, 1.67638483018380384940e0, 2.05319162663775882187e0, 1.0)
_E = (2.01033439929228813265e-7, 2.71155556874348757815e-5, 1.24266094738807843860e-3, 2.65321895265761230930e-2,
      2.96560571828504891230e-1, 1.78482653991729133580e0, 5.46378491116411436990e0, 6.65790464350110377720e0)
_F = (2.04426310338993978564e-15, 1.42151175831644588870e-7, 1.84631831751005468180e-5, 7.86869131145613259100e-4,
      1.48753612908506148525e-2, 1.36929880922735805310e-1, 5.99832206555887937690e-1, 1.0)
_AS241 = np.array([_A, _B, _C, _D, _E, _F])


# ---------------------------------------------------------------- uniforms

@njit
def uniform_nb(key, c):
    z = np.uint64(key) + (np.uint64(c) + _U1) * _U_GOLDEN
    z = (z ^ (z >> _U30)) * _U_M1
    z = (z ^ (z >> _U27)) * _U_M2
    z = z ^ (z >> _U31)
    return (float(z >> _U12) + 0.5) * 2.0**-52


# ---------------------------------------------------------------- ndtri

@njit
def _horner(cf, row, x):
    acc = cf[row, 0]
    for i in range(1, 8):
        acc = acc * x + cf[row, i]
    return acc


@njit
def ndtri_nb(p):
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _horner(_AS241, 0, r) / _horner(_AS241, 1, r)
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _horner(_AS241, 2, r) / _horner(_AS241, 3, r)
    else:
        r -= 5.0
        val = _horner(_AS241, 4, r) / _horner(_AS241, 5, r)
    return -val if q < 0.0 else val


def _horner_np(row, x):
    acc = np.full_like(x, _AS241[row, 0])
    for i in range(1, 8):
        acc = acc * x + _AS241[row, i]
    return acc


def ndtri_np(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    qc = q[central]
    r = 0.180625 - qc * qc
    out[central] = qc * _horner_np(0, r) / _horner_np(1, r)
    tail = ~central
    if tail.any():
        qt = q[tail]
        r = np.where(qt < 0.0, p[tail], 1.0 - p[tail])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        rn = r[near] - 1.6
        val[near] = _horner_np(2, rn) / _horner_np(3, rn)
        rf = r[~near] - 5.0
        val[~near] = _horner_np(4, rf) / _horner_np(5, rf)
        out[tail] = np.where(qt < 0.0, -val, val)
    return out


# ---------------------------------------------------------------- Binomial(N, 1/2)

@njit
def _binom_lower_nb(N, v, strict):
    j = int(math.floor(0.5 * N - 5.0 * math.sqrt(N) - 5.0))
    if j < 0:
        j = 0
    p = math.exp(math.lgamma(N + 1.0) - math.lgamma(j + 1.0) - math.lgamma(N - j + 1.0) - N * LN2)
    cum = p
    while j < N and (cum <= v if strict else cum < v):
        p = p * (N - j) / (j + 1)
        j += 1
        cum += p
    return j


@njit
def binom_half_quantile_nb(N, u):
    """Smallest j with P(Bin(N, 1/2) <= j) >= u."""
    if N <= 0:
        return 0
    if u <= 0.5:
        return _binom_lower_nb(N, u, False)
    return N - _binom_lower_nb(N, 1.0 - u, True)


def binom_half_quantile_np(N, u) -> np.ndarray:
    N = np.asarray(N, dtype=np.int64)
    u = np.asarray(u, dtype=np.float64)
    N, u = np.broadcast_arrays(N, u)
    shape = N.shape
    N, u = N.ravel(), u.ravel()
    lower = u <= 0.5
    v = np.where(lower, u, 1.0 - u)
    j = np.maximum(np.floor(0.5 * N - 5.0 * np.sqrt(N) - 5.0), 0).astype(np.int64)
    p = np.exp(gammaln(N + 1.0) - gammaln(j + 1.0) - gammaln(N - j + 1.0) - N * LN2)
    cum = p.copy()
    idx = np.nonzero((j < N) & np.where(lower, cum < v, cum <= v))[0]
    while idx.size:
        jj = j[idx]
        p[idx] = p[idx] * (N[idx] - jj) / (jj + 1)
        j[idx] = jj + 1
        cum[idx] += p[idx]
        go = (j[idx] < N[idx]) & np.where(lower[idx], cum[idx] < v[idx], cum[idx] <= v[idx])
        idx = idx[go]
    return np.where(lower, j, N - j).reshape(shape)


# ---------------------------------------------------------------- hypergeometric count

@njit
def _lchoose_nb(a, b):
    return math.lgamma(a + 1.0) - math.lgamma(b + 1.0) - math.lgamma(a - b + 1.0)


@njit
def _hyper_lower_nb(n, K, k, v, strict):
    lo = max(0, k - (n - K))
    hi = min(k, K)
    mean = k * K / n
    var = k * K * (n - K) * (n - k) / (n * n * max(n - 1, 1))
    j = int(math.floor(mean - 10.0 * math.sqrt(var) - 5.0))
    if j < lo:
        j = lo
    p = math.exp(_lchoose_nb(K, j) + _lchoose_nb(n - K, k - j) - _lchoose_nb(n, k))
    cum = p
    while j < hi and (cum <= v if strict else cum < v):
        p = p * (K - j) * (k - j) / ((j + 1) * (n - K - k + j + 1))
        j += 1
        cum += p
    return j


@njit
def hyper_quantile_nb(n, K, k, u):
    """Smallest j with P(X <= j) >= u, X the number of marked items among k
    drawn without replacement from n items of which K are marked."""
    if u <= 0.5:
        return _hyper_lower_nb(n, K, k, u, False)
    return k - _hyper_lower_nb(n, n - K, k, 1.0 - u, True)


def _lchoose_np(a, b):
    return gammaln(a + 1.0) - gammaln(b + 1.0) - gammaln(a - b + 1.0)


def hyper_quantile_np(n, K, k, u) -> np.ndarray:
    n, K, k, u = np.broadcast_arrays(
        np.asarray(n, dtype=np.int64), np.asarray(K, dtype=np.int64), np.asarray(k, dtype=np.int64),
        np.asarray(u, dtype=np.float64),
    )
    shape = n.shape
    n, K, k, u = n.ravel(), K.ravel(), k.ravel(), u.ravel()
    lower = u <= 0.5
    v = np.where(lower, u, 1.0 - u)
    KK = np.where(lower, K, n - K)
    lo = np.maximum(0, k - (n - KK))
    hi = np.minimum(k, KK)
    mean = k * KK / n
    var = k * KK * (n - KK) * (n - k) / (n * n * np.maximum(n - 1, 1))
    j = np.maximum(np.floor(mean - 10.0 * np.sqrt(var) - 5.0).astype(np.int64), lo)
    p = np.exp(_lchoose_np(KK, j) + _lchoose_np(n - KK, k - j) - _lchoose_np(n, k))
    cum = p.copy()
    idx = np.nonzero((j < hi) & np.where(lower, cum < v, cum <= v))[0]
    while idx.size:
        jj, Ki, ki, ni = j[idx], KK[idx], k[idx], n[idx]
        p[idx] = p[idx] * (Ki - jj) * (ki - jj) / ((jj + 1) * (ni - Ki - ki + jj + 1))
        j[idx] = jj + 1
        cum[idx] += p[idx]
        go = (j[idx] < hi[idx]) & np.where(lower[idx], cum[idx] < v[idx], cum[idx] <= v[idx])
        idx = idx[go]
    return np.where(lower, j, k - j).reshape(shape)


# ---------------------------------------------------------------- dyadic tree
#
# Heap indexing: node h = 2^p + k is the interval [k 2^-p, (k+1) 2^-p].
# counts has generations 0..m, z has generations 0..m+r-1.

@njit
def ep_tree_nb(n, m, r, key):
    G = m + r
    z = np.zeros(1 << G)
    counts = np.zeros(1 << (m + 1), dtype=np.int64)
    counts[1] = n
    split = 1 << m
    for h in range(1, 1 << G):
        u = uniform_nb(key, h)
        z[h] = ndtri_nb(u)
        if h < split:
            N = counts[h]
            j = binom_half_quantile_nb(N, u)
            counts[2 * h] = j
            counts[2 * h + 1] = N - j
    return counts, z


def ep_tree_np(n, m, r, key):
    from ._rng import uniforms_np

    G = m + r
    z = np.zeros(1 << G)
    counts = np.zeros(1 << (m + 1), dtype=np.int64)
    counts[1] = n
    for p in range(G):
        h = np.arange(1 << p, 1 << (p + 1))
        u = uniforms_np(key, h)
        z[h] = ndtri_np(u)
        if p < m:
            N = counts[h]
            j = binom_half_quantile_np(N, u)
            counts[2 * h] = j
            counts[2 * h + 1] = N - j
    return counts, z


@njit
def ep_bridge_nb(z, G, scales):
    """Brownian bridge on the generation-G grid from the Haar coefficients
    (midpoint displacement, identical to the truncated Schauder series)."""
    L = 1 << G
    W = np.zeros(L + 1)
    for p in range(G):
        step = L >> p
        half = step >> 1
        base = 1 << p
        for k in range(base):
            a = k * step
            W[a + half] = 0.5 * (W[a] + W[a + step]) + z[base + k] * scales[p]
    return W


def ep_bridge_np(z, G, scales):
    L = 1 << G
    W = np.zeros(L + 1)
    for p in range(G):
        step = L >> p
        half = step >> 1
        base = 1 << p
        a = np.arange(base) * step
        W[a + half] = 0.5 * (W[a] + W[a + step]) + z[base:2 * base] * scales[p]
    return W


@njit
def ep_stats_nb(n, m, r, counts, z, scales):
    """(D_n, delta_Gn, delta_W0, chi2max, node violations)."""
    G = m + r
    W = ep_bridge_nb(z, G, scales)
    rn = math.sqrt(n)
    cells = 1 << m
    sub = 1 << r
    cum = 0
    dmax = 0.0
    cmax = 0
    wosc = 0.0
    for k in range(cells + 1):
        d = abs(cum - n * (k / cells) - rn * W[k * sub])
        if d > dmax:
            dmax = d
        if k < cells:
            c = counts[cells + k]
            cum += c
            if c > cmax:
                cmax = c
            lo = W[k * sub]
            hi = W[k * sub]
            for i in range(k * sub + 1, (k + 1) * sub + 1):
                if W[i] < lo:
                    lo = W[i]
                if W[i] > hi:
                    hi = W[i]
            if hi - lo > wosc:
                wosc = hi - lo
    chi = 0.0
    for k in range(cells):
        acc = 0.0
        h = cells + k
        while h >= 1:
            acc += z[h] * z[h]
            h >>= 1
        if acc > chi:
            chi = acc
    bad = 0
    for h in range(1, cells):
        N = counts[h]
        if N >= 1:
            nh = 2 * counts[2 * h] - N
            zr = z[h] * math.sqrt(N)
            if abs(nh) > abs(zr) + 3.0 + SLACK or abs(nh - zr) > z[h] * z[h] + 11.0 + SLACK:
                bad += 1
    return dmax, (cmax + n / cells) / rn, wosc, chi, bad


def ep_stats_np(n, m, r, counts, z, scales):
    G = m + r
    W = ep_bridge_np(z, G, scales)
    rn = math.sqrt(n)
    cells = 1 << m
    sub = 1 << r
    leaves = counts[cells:2 * cells]
    cum = np.concatenate(([0], np.cumsum(leaves)))
    k = np.arange(cells + 1)
    dmax = float(np.max(np.abs(cum - n * (k / cells) - rn * W[k * sub])))
    blocks = np.lib.stride_tricks.sliding_window_view(W, sub + 1)[::sub]
    wosc = float(np.max(blocks.max(axis=1) - blocks.min(axis=1)))
    acc = np.zeros(cells)
    h = np.arange(cells, 2 * cells)
    for _ in range(m + 1):
        acc += z[h] * z[h]
        h >>= 1
    chi = float(acc.max())
    h = np.arange(1, cells)
    N = counts[h]
    nh = 2 * counts[2 * h] - N
    zr = z[h] * np.sqrt(N)
    viol = (N >= 1) & ((np.abs(nh) > np.abs(zr) + 3.0 + SLACK) | (np.abs(nh - zr) > z[h] * z[h] + 11.0 + SLACK))
    return dmax, (int(leaves.max()) + n / cells) / rn, wosc, chi, int(viol.sum())


@njit
def ep_batch_nb(n, m, r, keys, scales):
    R = keys.shape[0]
    out = np.zeros((R, 6))
    for i in range(R):
        counts, z = ep_tree_nb(n, m, r, keys[i])
        d, g, w, c, b = ep_stats_nb(n, m, r, counts, z, scales)
        out[i, 0] = d
        out[i, 1] = g
        out[i, 2] = w
        out[i, 3] = c
        out[i, 4] = b
        out[i, 5] = counts[2]
    return out


def ep_batch_np(n, m, r, keys, scales):
    out = np.zeros((len(keys), 6))
    for i, key in enumerate(keys):
        counts, z = ep_tree_np(n, m, r, int(key))
        out[i, :5] = ep_stats_np(n, m, r, counts, z, scales)
        out[i, 5] = counts[2]
    return out


# ---------------------------------------------------------------- recursive walk coupling
#
# The segment plan (a, b, h) lists the recursion nodes breadth first; h is
# the heap label of the node, used as its RNG counter block (16 h .. 16 h + 15).
# Counter 0 drives the S_n / Z coupling in full mode.

BASE_MAX = 5


def segment_plan(n: int):
    A, B, H, D = [0], [n], [1], [0]
    i = 0
    while i < len(A):
        a, b, h, d = A[i], B[i], H[i], D[i]
        if b - a > BASE_MAX:
            k = (b - a) // 2
            A += [a, a + k]
            B += [a + k, b]
            H += [2 * h, 2 * h + 1]
            D += [d + 1, d + 1]
        i += 1
    return (np.array(A, dtype=np.int64), np.array(B, dtype=np.int64), np.array(H, dtype=np.int64),
            np.array(D, dtype=np.int64))


@njit
def rw_path_nb(n, t, key, full, A, B, H):
    """One replicate. Returns S, V, Z, per-node (R_c, T) and the number of
    nodes violating T <= max(T', T'') + R_c."""
    S = np.zeros(n + 1, dtype=np.int64)
    V = np.zeros(n + 1)
    Z = 0.0
    if full:
        u0 = uniform_nb(key, 0)
        Z = ndtri_nb(u0)
        t = 2 * binom_half_quantile_nb(n, u0) - n
    S[n] = t
    nn = A.shape[0]
    Rc = np.zeros(nn)
    for i in range(nn):
        a = A[i]
        b = B[i]
        c0 = 16 * H[i]
        L = b - a
        tt = S[b] - S[a]
        if (L + tt) % 2 != 0 or abs(tt) > L:
            raise ValueError("improbable endpoint in recursion")
        if L > BASE_MAX:
            k = L // 2
            u = uniform_nb(key, c0)
            v = math.sqrt(k * (L - k) / L) * ndtri_nb(u)
            x = hyper_quantile_nb(L, (L + tt) // 2, k, u)
            s = 2 * x - k
            S[a + k] = S[a] + s
            V[a + k] = V[a] + (k / L) * (V[b] - V[a]) + v
            Rc[i] = abs(s - k * tt / L - v)
        else:
            ups = (L + tt) // 2
            for j in range(L - 1):
                u = uniform_nb(key, c0 + j)
                step = 1 if u * (L - j) < ups else -1
                if step == 1:
                    ups -= 1
                S[a + j + 1] = S[a + j] + step
            acc = 0.0
            g = np.zeros(L)
            for j in range(L):
                g[j] = ndtri_nb(uniform_nb(key, c0 + 5 + j))
                acc += g[j]
            part = 0.0
            for j in range(1, L):
                part += g[j - 1]
                V[a + j] = V[a] + (j / L) * (V[b] - V[a]) + part - (j / L) * acc
    T = np.zeros(nn)
    for i in range(nn):
        a = A[i]
        b = B[i]
        L = b - a
        ds = (S[b] - S[a]) / L
        dv = (V[b] - V[a]) / L
        best = 0.0
        for j in range(1, L):
            d = abs(S[a + j] - S[a] - j * ds - (V[a + j] - V[a] - j * dv))
            if d > best:
                best = d
        T[i] = best
    bad = 0
    # children of node i sit at positions found by matching heap labels
    pos = 0
    for i in range(nn):
        if B[i] - A[i] > BASE_MAX:
            while H[pos] != 2 * H[i]:
                pos += 1
            if T[i] > max(T[pos], T[pos + 1]) + Rc[i] + SLACK:
                bad += 1
    return S, V, Z, Rc, T, bad


@njit
def rw_batch_nb(n, t, keys, full, A, B, H):
    """Per replicate: T* (bridge deviation), max |S_k - W(k)| (full mode),
    the root R_c, Z, violations of the pathwise inequality."""
    R = keys.shape[0]
    out = np.zeros((R, 5))
    rn = math.sqrt(n)
    for r in range(R):
        S, V, Z, Rc, T, bad = rw_path_nb(n, t, keys[r], full, A, B, H)
        tt = S[n]
        dev = 0.0
        dmax = 0.0
        for i in range(n + 1):
            d = abs(S[i] - i * tt / n - V[i])
            if d > dev:
                dev = d
            if full:
                e = abs(S[i] - V[i] - (i / n) * rn * Z)
                if e > dmax:
                    dmax = e
        out[r, 0] = dev
        out[r, 1] = dmax
        out[r, 2] = Rc[0]
        out[r, 3] = Z
        out[r, 4] = bad
    return out


def rw_paths_np(n, t, keys, full, A, B, H):
    """All replicates at once (rows), one recursion node at a time."""
    from ._rng import uniforms_np

    keys = np.asarray([int(k) for k in keys], dtype=np.uint64)
    R = len(keys)
    S = np.zeros((R, n + 1), dtype=np.int64)
    V = np.zeros((R, n + 1))
    Z = np.zeros(R)

    def unif(c):
        return uniforms_np(keys, c)

    if full:
        u0 = unif(0)
        Z = ndtri_np(u0)
        S[:, n] = 2 * binom_half_quantile_np(n, u0) - n
    else:
        S[:, n] = t
    nn = len(A)
    Rc = np.zeros((R, nn))
    for i in range(nn):
        a, b, c0 = int(A[i]), int(B[i]), 16 * int(H[i])
        L = b - a
        tt = S[:, b] - S[:, a]
        if np.any((L + tt) % 2 != 0) or np.any(np.abs(tt) > L):
            raise ValueError("improbable endpoint in recursion")
        if L > BASE_MAX:
            k = L // 2
            u = unif(c0)
            v = math.sqrt(k * (L - k) / L) * ndtri_np(u)
            x = hyper_quantile_np(L, (L + tt) // 2, k, u)
            s = 2 * x - k
            S[:, a + k] = S[:, a] + s
            V[:, a + k] = V[:, a] + (k / L) * (V[:, b] - V[:, a]) + v
            Rc[:, i] = np.abs(s - k * tt / L - v)
        else:
            ups = (L + tt) // 2
            for j in range(L - 1):
                u = unif(c0 + j)
                up = u * (L - j) < ups
                ups = ups - up
                S[:, a + j + 1] = S[:, a + j] + np.where(up, 1, -1)
            g = np.stack([ndtri_np(unif(c0 + 5 + j)) for j in range(L)], axis=1)
            acc = np.zeros(R)
            for j in range(L):
                acc += g[:, j]
            part = np.zeros(R)
            for j in range(1, L):
                part += g[:, j - 1]
                V[:, a + j] = V[:, a] + (j / L) * (V[:, b] - V[:, a]) + part - (j / L) * acc
    T = np.zeros((R, nn))
    for i in range(nn):
        a, b = int(A[i]), int(B[i])
        L = b - a
        if L < 2:
            continue
        ds = (S[:, b] - S[:, a]) / L
        dv = (V[:, b] - V[:, a]) / L
        j = np.arange(1, L)
        d = np.abs(S[:, a + j] - S[:, a, None] - j * ds[:, None] - (V[:, a + j] - V[:, a, None] - j * dv[:, None]))
        T[:, i] = d.max(axis=1)
    where = {int(h): i for i, h in enumerate(H)}
    bad = np.zeros(R)
    for i in range(nn):
        if B[i] - A[i] > BASE_MAX:
            c = where[2 * int(H[i])]
            bad += T[:, i] > np.maximum(T[:, c], T[:, c + 1]) + Rc[:, i] + SLACK
    return S, V, Z, Rc, T, bad


def rw_batch_np(n, t, keys, full, A, B, H):
    S, V, Z, Rc, T, bad = rw_paths_np(n, t, keys, full, A, B, H)
    i = np.arange(n + 1)
    tt = S[:, n]
    dev = np.abs(S - i * tt[:, None] / n - V).max(axis=1)
    if full:
        dmax = np.abs(S - V - (i / n) * math.sqrt(n) * Z[:, None]).max(axis=1)
    else:
        dmax = np.zeros(len(keys))
    return np.column_stack([dev, dmax, Rc[:, 0], Z, bad])
