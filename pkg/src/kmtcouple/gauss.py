"""Standard normal CDF and quantile, including probabilities below the
double-precision range (given as logarithms)."""

import math

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

LOG_TINY = math.log(1e-300)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

norm_cdf = ndtr
norm_ppf = ndtri


def norm_ppf_log(logp):
    """z with log Phi(z) = logp, for logp <= log(1/2) (lower tail).

    Uses ``ndtri`` while exp(logp) is representable and Newton steps on
    ``log_ndtr`` below that.
    """
    logp = np.asarray(logp, dtype=float)
    out = np.empty_like(logp)
    small = logp < LOG_TINY
    out[~small] = ndtri(np.exp(logp[~small]))
    if small.any():
        lp = logp[small]
        z = -np.sqrt(-2.0 * lp)
        for _ in range(60):
            ln = log_ndtr(z)
            # d/dz log Phi(z) = phi(z) / Phi(z)
            slope = np.exp(-0.5 * z * z - _LOG_SQRT_2PI - ln)
            step = (ln - lp) / slope
            z = z - step
            if np.all(np.abs(step) <= 1e-15 * np.abs(z)):
                break
        out[small] = z
    return out


def ppf_of_ratio(num: int, den: int) -> float:
    """Phi^{-1}(num/den) for big nonnegative integers, num/den <= 1."""
    if num <= 0:
        return -math.inf
    if num >= den:
        return math.inf
    p = num / den
    if p >= 1e-300:
        if p > 0.5:
            return -float(ndtri((den - num) / den))
        return float(ndtri(p))
    return float(norm_ppf_log(np.array([math.log(num) - math.log(den)]))[0])
