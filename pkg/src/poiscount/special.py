"""Scalar special functions shared by every other module.

Poisson CDF/quantile, standard normal CDF/PDF/quantile, modified Bessel
functions of order 0 and 1, and truncated-normal sampling/moments.  All
functions are pure and accept scalars or numpy arrays (broadcasting).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sc

__all__ = [
    "Interval",
    "DegenerateIntervalError",
    "poisson_cdf",
    "poisson_tail",
    "poisson_logpmf",
    "poisson_pmf",
    "poisson_quantile",
    "normal_cdf",
    "normal_pdf",
    "normal_quantile",
    "bessel_i",
    "truncated_normal_sample",
    "truncated_normal_mean",
]

# Poisson CDF: direct summation below this mean, incomplete gamma above.
_SUMMATION_LAMBDA_MAX = 30.0

# normal_quantile clamps interior arguments to [_U_LO, _U_HI]; exact 0 and 1
# still map to -inf/+inf.
_U_LO = 1e-300
_U_HI = 1.0 - 1e-16


@dataclass(frozen=True)
class Interval:
    """Half-open interval (lo, hi]; -inf and +inf endpoints permitted."""

    lo: float
    hi: float

    def __post_init__(self):
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("interval endpoints must not be NaN")
        if self.lo > self.hi:
            raise ValueError(f"interval endpoints out of order: ({self.lo}, {self.hi})")


class DegenerateIntervalError(ValueError):
    """The interval carries no normal probability mass (underflow to 0)."""

    def __init__(self, interval, mean=0.0, sd=1.0):
        self.interval = interval
        super().__init__(
            f"interval ({interval.lo}, {interval.hi}] has zero mass "
            f"under N({mean}, {sd}^2)"
        )


def _check_lambda(lam):
    lam = np.asarray(lam, dtype=float)
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
        raise ValueError("Poisson mean must be finite and positive")
    return lam


def poisson_cdf(lam, n):
    """Poisson CDF P(N <= n) for N ~ Poisson(lam).

    Parameters
    ----------
    lam : float or array_like
        Positive Poisson mean(s).
    n : int or array_like
        Count argument(s); values below zero give 0. Non-integers are
        floored.

    Returns
    -------
    float or ndarray
        The CDF values, broadcast over the inputs.
    """
    lam = _check_lambda(lam)
    n = np.floor(np.asarray(n, dtype=float))
    lam_b, n_b = np.broadcast_arrays(lam, n)
    out = np.zeros(lam_b.shape, dtype=float)
    valid = n_b >= 0.0

    small = valid & (lam_b <= _SUMMATION_LAMBDA_MAX)
    if np.any(small):
        out[small] = _cdf_by_summation(lam_b[small], n_b[small])
    large = valid & ~small
    if np.any(large):
        # P(N <= n) = Q(n + 1, lam), the regularized upper incomplete gamma
        out[large] = _sc.gammaincc(n_b[large] + 1.0, lam_b[large])
    if out.ndim == 0:
        return float(out)
    return out


def _cdf_by_summation(lam, n):
    """Term-recurrence summation of the Poisson CDF, vectorized over pairs."""
    lam = np.atleast_1d(lam)
    n = np.atleast_1d(n)
    # beyond lam + 40*sqrt(lam) + 50 the missing tail is < 1e-300
    cap = lam + 40.0 * np.sqrt(lam) + 50.0
    done = n > cap
    result = np.where(done, 1.0, 0.0)
    todo = ~done
    if np.any(todo):
        kmax = int(np.max(n[todo]))
        term = np.exp(-lam)
        acc = np.where(n >= 0.0, term, 0.0)
        for k in range(1, kmax + 1):
            term = term * lam / k
            acc = acc + np.where(n >= k, term, 0.0)
        result[todo] = acc[todo]
    return np.minimum(result, 1.0)


def poisson_tail(lam, n):
    """P(N >= n) for N ~ Poisson(lam), accurate in the far right tail."""
    lam = _check_lambda(lam)
    n = np.floor(np.asarray(n, dtype=float))
    lam_b, n_b = np.broadcast_arrays(lam, n)
    out = np.ones(lam_b.shape, dtype=float)
    pos = n_b >= 1.0
    # P(N >= n) = P(n, lam), the regularized lower incomplete gamma
    out[pos] = _sc.gammainc(n_b[pos], lam_b[pos])
    if out.ndim == 0:
        return float(out)
    return out


def poisson_logpmf(lam, n):
    """log P(N = n); -inf for negative or non-integer support points."""
    lam = _check_lambda(lam)
    n = np.asarray(n, dtype=float)
    lam_b, n_b = np.broadcast_arrays(lam, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -lam_b + n_b * np.log(lam_b) - _sc.gammaln(n_b + 1.0)
    out = np.where((n_b >= 0.0) & (n_b == np.floor(n_b)), out, -np.inf)
    if out.ndim == 0:
        return float(out)
    return out


def poisson_pmf(lam, n):
    return np.exp(poisson_logpmf(lam, n))


def poisson_quantile(lam, u):
    """Poisson quantile: smallest n >= 0 with poisson_cdf(lam, n) >= u.

    Parameters
    ----------
    lam : float or array_like
        Positive Poisson mean(s).
    u : float or array_like
        Probabilities in [0, 1).  Values at or above 1 raise (infinite
        quantile), as do negative values.

    Returns
    -------
    int or ndarray of int
        Quantiles satisfying ``F(q) >= u`` and ``q == 0 or F(q - 1) < u``.
    """
    lam = _check_lambda(lam)
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u >= 1.0) or not np.all(np.isfinite(u)):
        raise ValueError("quantile argument must lie in [0, 1)")
    lam_b, u_b = np.broadcast_arrays(lam, u)
    lam_f = np.ravel(lam_b).astype(float)
    u_f = np.ravel(u_b).astype(float)

    # bracket (lo, hi] with F(lo) < u <= F(hi); lo = -1 is a sentinel
    hi = np.floor(lam_f)
    step = np.maximum(1.0, np.ceil(np.sqrt(lam_f)))
    while True:
        need = poisson_cdf(lam_f, hi) < u_f
        if not np.any(need):
            break
        hi = np.where(need, hi + step, hi)
        step = np.where(need, 2.0 * step, step)
    lo = np.full_like(hi, -1.0)
    active = hi - lo > 1.0
    while np.any(active):
        mid = np.floor((lo + hi) / 2.0)
        ge = poisson_cdf(lam_f[active], mid[active]) >= u_f[active]
        idx = np.flatnonzero(active)
        hi[idx[ge]] = mid[idx[ge]]
        lo[idx[~ge]] = mid[idx[~ge]]
        active = hi - lo > 1.0
    q = hi.astype(np.int64).reshape(lam_b.shape)
    if q.ndim == 0:
        return int(q)
    return q


def normal_cdf(z):
    return _sc.ndtr(z)


def normal_pdf(z):
    z = np.asarray(z, dtype=float)
    out = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    if out.ndim == 0:
        return float(out)
    return out


def normal_quantile(u):
    """Inverse standard normal CDF with the conventions Phi^-1(0) = -inf,
    Phi^-1(1) = +inf.

    Interior arguments are clamped to [1e-300, 1 - 1e-16] before inversion
    so that astronomically deep tails stay finite.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u > 1.0) or not np.all(np.isfinite(u)):
        raise ValueError("normal_quantile argument must lie in [0, 1]")
    clipped = np.clip(u, _U_LO, _U_HI)
    out = _sc.ndtri(clipped)
    out = np.where(u == 0.0, -np.inf, out)
    out = np.where(u == 1.0, np.inf, out)
    if out.ndim == 0:
        return float(out)
    return out


def bessel_i(j, x, scaled=False):
    """Modified Bessel function of the first kind, order 0 or 1.

    With ``scaled=True`` returns exp(-x) * I_j(x), which stays finite for
    arguments in the tens of thousands.
    """
    if j not in (0, 1):
        raise ValueError(f"order must be 0 or 1, got {j}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise ValueError("argument must be nonnegative")
    if scaled:
        out = _sc.i0e(x) if j == 0 else _sc.i1e(x)
    else:
        out = _sc.i0(x) if j == 0 else _sc.i1(x)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _std_interval_prob(alpha, beta):
    """P(alpha < Z <= beta) for standard normal Z, computed from whichever
    tail preserves relative accuracy."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    with np.errstate(invalid="ignore"):
        mid = alpha + beta
    flip = np.where(np.isnan(mid), False, mid > 0.0)
    lo = np.where(flip, -beta, alpha)
    hi = np.where(flip, -alpha, beta)
    p_lo = _sc.ndtr(lo)
    mass = _sc.ndtr(hi) - p_lo
    return np.maximum(mass, 0.0), flip, p_lo


def _std_truncated_ppf(alpha, beta, u):
    """Inverse-CDF draw from Z | alpha < Z <= beta at uniform u in (0,1).

    Returns (z, mass); entries with zero interval mass yield z = nan so the
    caller can decide how to fail.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    u = np.asarray(u, dtype=float)
    mass, flip, p_lo = _std_interval_prob(alpha, beta)
    frac = np.where(flip, 1.0 - u, u)
    with np.errstate(invalid="ignore"):
        target = np.clip(p_lo + frac * mass, _U_LO, _U_HI)
    z = _sc.ndtri(target)
    z = np.where(flip, -z, z)
    # keep the draw strictly inside the interval despite rounding
    lo_edge = np.where(np.isfinite(alpha), alpha, -np.inf)
    hi_edge = np.where(np.isfinite(beta), beta, np.inf)
    tiny = np.finfo(float).tiny
    z = np.minimum(np.maximum(z, np.nextafter(lo_edge, np.inf)),
                   np.nextafter(hi_edge, -np.inf))
    z = np.where(mass <= tiny, np.nan, z)
    return z, mass


def _as_interval(interval):
    if isinstance(interval, Interval):
        return interval
    lo, hi = interval
    return Interval(float(lo), float(hi))


def truncated_normal_sample(mean, sd, interval, u):
    """Inverse-CDF sample of N(mean, sd^2) truncated to (lo, hi].

    The draw is mean + sd * Phi^-1(Phi(a) + u * (Phi(b) - Phi(a))) with
    a, b the standardized endpoints; it is strictly increasing in u and
    lies strictly inside the interval.

    Raises
    ------
    DegenerateIntervalError
        If the interval mass underflows to zero.
    """
    interval = _as_interval(interval)
    if not sd > 0.0:
        raise ValueError("sd must be positive")
    if not 0.0 < u < 1.0:
        raise ValueError("u must lie strictly inside (0, 1)")
    alpha = (interval.lo - mean) / sd
    beta = (interval.hi - mean) / sd
    z, mass = _std_truncated_ppf(alpha, beta, u)
    if float(mass) <= 0.0 or not np.isfinite(float(z)):
        raise DegenerateIntervalError(interval, mean, sd)
    return float(mean + sd * z)


def truncated_normal_mean(mean, sd, interval):
    """Mean of N(mean, sd^2) truncated to (lo, hi]:
    mean + sd * (phi(a) - phi(b)) / (Phi(b) - Phi(a)).
    """
    interval = _as_interval(interval)
    if not sd > 0.0:
        raise ValueError("sd must be positive")
    alpha = (interval.lo - mean) / sd
    beta = (interval.hi - mean) / sd
    mass, _, _ = _std_interval_prob(alpha, beta)
    if float(mass) <= 0.0:
        raise DegenerateIntervalError(interval, mean, sd)
    dens_lo = 0.0 if math.isinf(alpha) else normal_pdf(alpha)
    dens_hi = 0.0 if math.isinf(beta) else normal_pdf(beta)
    return float(mean + sd * (dens_lo - dens_hi) / float(mass))
