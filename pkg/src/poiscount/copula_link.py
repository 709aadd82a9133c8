"""Hermite-expansion calculus for the Gaussian-copula count transform.

The transform G(z) = F_lam^{-1}(Phi(z)) maps a standard normal to a
Poisson(lam) variable.  Its Hermite coefficients g_k determine the link
function L(u) = sum_k eta_k u^k, eta_k = k! g_k^2 / lam, which converts
latent Gaussian lag correlations into count-series autocovariance ratios.
This module also computes the most negative correlation attainable between
two Poisson(lam) variables and its superposition-model counterpart.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .special import (
    bessel_i,
    normal_pdf,
    normal_quantile,
    poisson_cdf,
    poisson_tail,
)

__all__ = [
    "HermiteExpansion",
    "CorrelationBound",
    "hermite_poly",
    "hermite_coefficients",
    "link",
    "neg_bound",
    "kappa",
    "min_expect_heterogeneous",
    "super_neg_bound",
    "correlation_bounds",
]

MAX_TRUNCATION_ORDER = 50
DEFAULT_TRUNCATION_ORDER = 30


def hermite_poly(k, x):
    """Probabilists' Hermite polynomial H_k(x).

    H_0 = 1, H_1 = x, and H_k(x) = x H_{k-1}(x) - (k-1) H_{k-2}(x).
    """
    if k < 0:
        raise ValueError("order must be nonnegative")
    x = np.asarray(x, dtype=float)
    h_prev = np.ones_like(x)
    if k == 0:
        return float(h_prev) if h_prev.ndim == 0 else h_prev
    h = x.copy()
    for j in range(2, k + 1):
        h, h_prev = x * h - (j - 1) * h_prev, h
    return float(h) if h.ndim == 0 else h


def _hermite_table(order, x):
    """H_0..H_order evaluated at the 1-d array x, stacked row-wise."""
    table = np.empty((order + 1, x.size))
    table[0] = 1.0
    if order >= 1:
        table[1] = x
    for j in range(2, order + 1):
        table[j] = x * table[j - 1] - (j - 1) * table[j - 2]
    return table


def _transform_cutpoints(lam, tail_tol=1e-16):
    """z-values t_l = Phi^{-1}(F_lam(l)) at which G jumps from l to l+1."""
    n_max = int(lam + 14.0 * math.sqrt(lam) + 80.0)
    cdf = poisson_cdf(lam, np.arange(n_max + 1))
    cdf = cdf[cdf < 1.0 - tail_tol]
    return normal_quantile(cdf)


@dataclass(frozen=True)
class HermiteExpansion:
    """Truncated Hermite expansion of the copula transform at one lam.

    Attributes
    ----------
    lam : float
        Poisson mean; also the variance gamma_X(0) normalizing eta.
    g : ndarray
        Hermite coefficients g_1..g_K.
    eta : ndarray
        Link coefficients eta_k = k! g_k^2 / lam (all nonnegative).
    order : int
        Truncation order K.
    tail_mass : float
        1 - sum(eta): link mass beyond the truncation.
    """

    lam: float
    g: np.ndarray
    eta: np.ndarray
    order: int
    tail_mass: float

    def __post_init__(self):
        if np.any(self.eta < 0.0):
            raise ValueError("link coefficients must be nonnegative")
        if self.tail_mass < -1e-8:
            raise ValueError(f"link coefficients exceed total mass: tail {self.tail_mass}")


def hermite_coefficients(lam, order=DEFAULT_TRUNCATION_ORDER, method="series"):
    """Hermite coefficients g_1..g_K of G = F_lam^{-1}(Phi(.)).

    Parameters
    ----------
    lam : float
        Positive Poisson mean.
    order : int
        Truncation order K, between 1 and 50.
    method : {"series", "quadrature"}
        "series" evaluates the exact jump-point sum
        g_k = (1/k!) sum_l H_{k-1}(t_l) phi(t_l); "quadrature" integrates
        E[G(Z) H_k(Z)]/k! piecewise between the jump points with
        Gauss-Legendre nodes.  The two agree to ~1e-12.

    Returns
    -------
    HermiteExpansion
    """
    lam = float(lam)
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ValueError("lam must be finite and positive")
    if not 1 <= order <= MAX_TRUNCATION_ORDER:
        raise ValueError(
            f"truncation order must be in [1, {MAX_TRUNCATION_ORDER}], got {order}"
        )
    if method == "series":
        g = _coefficients_series(lam, order)
    elif method == "quadrature":
        g = _coefficients_quadrature(lam, order)
    else:
        raise ValueError(f"unknown method {method!r}")
    # eta_k = k! g_k^2 / lam, computed as S_k^2 / (k! lam) in series form;
    # here from g directly since K <= 50 keeps the factorials finite.
    facts = np.array([math.factorial(k) for k in range(1, order + 1)], dtype=float)
    eta = facts * g * g / lam
    return HermiteExpansion(
        lam=lam, g=g, eta=eta, order=order, tail_mass=float(1.0 - eta.sum())
    )


def _coefficients_series(lam, order):
    t = _transform_cutpoints(lam)
    dens = normal_pdf(t)
    table = _hermite_table(order - 1, t) if order >= 1 else None
    g = np.empty(order)
    for k in range(1, order + 1):
        g[k - 1] = np.sum(table[k - 1] * dens) / math.factorial(k)
    return g


def _coefficients_quadrature(lam, order, nodes=40, z_max=9.5):
    t = _transform_cutpoints(lam, tail_tol=1e-15)
    edges = np.concatenate([t, [z_max]])
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    g = np.zeros(order)
    for level in range(1, edges.size):
        a, b = edges[level - 1], edges[level]
        half = (b - a) / 2.0
        z = (a + b) / 2.0 + half * xg
        weights = wg * half * normal_pdf(z) * level
        table = _hermite_table(order, z)
        for k in range(1, order + 1):
            g[k - 1] += np.sum(weights * table[k]) / math.factorial(k)
    return g


def link(expansion, u):
    """Link function L(u) = sum_{k=1}^K eta_k u^k for |u| <= 1."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) > 1.0):
        raise ValueError("link argument must satisfy |u| <= 1")
    powers = np.power.outer(u, np.arange(1, expansion.order + 1))
    out = powers @ expansion.eta
    if out.ndim == 0:
        return float(out)
    return out


def neg_bound(lam, tail_tol=1e-12):
    """Most negative correlation between two Poisson(lam) variables.

    Evaluates [sum_{k,l} (1 - c_l - c_k) 1[c_l + c_k < 1] - lam^2] / lam
    with c_n the Poisson(lam) CDF, attained by the antithetic copula pair
    X = F^{-1}(Phi(Z)), Y = F^{-1}(Phi(-Z)).
    """
    lam = float(lam)
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ValueError("lam must be finite and positive")
    n_max = int(lam + 12.0 * math.sqrt(lam) + 50.0)
    c = poisson_cdf(lam, np.arange(n_max + 1))
    keep = c <= 1.0 - tail_tol
    c = c[keep] if np.any(keep) else c[:1]
    total = c[:, None] + c[None, :]
    cross = np.where(total < 1.0, 1.0 - total, 0.0).sum()
    return float((cross - lam * lam) / lam)


def kappa(lam):
    """E[min(N, N')] for independent Poisson(lam) N, N'.

    Closed form lam * [1 - e^{-2 lam} (I_0(2 lam) + I_1(2 lam))], evaluated
    through the exponentially scaled Bessel functions so it is stable for
    lam up to 1e4 and beyond.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
        raise ValueError("lam must be finite and positive")
    scaled = bessel_i(0, 2.0 * lam, scaled=True) + bessel_i(1, 2.0 * lam, scaled=True)
    out = lam * (1.0 - scaled)
    if out.ndim == 0:
        return float(out)
    return out


def min_expect_heterogeneous(lam1, lam2, tail_tol=1e-14):
    """E[min(N, N')] for independent N ~ Poisson(lam1), N' ~ Poisson(lam2).

    Tail-sum evaluation sum_{n>=1} P(N >= n) P(N' >= n); no closed form
    exists when the means differ.
    """
    lam1 = float(lam1)
    lam2 = float(lam2)
    if lam1 <= 0.0 or lam2 <= 0.0:
        raise ValueError("both means must be positive")
    big = max(lam1, lam2)
    n_max = int(big + 12.0 * math.sqrt(big) + 50.0)
    n = np.arange(1, n_max + 1)
    t1 = poisson_tail(lam1, n)
    t2 = poisson_tail(lam2, n)
    keep = (t1 >= tail_tol) | (t2 >= tail_tol)
    return float(np.sum(t1[keep] * t2[keep]))


def super_neg_bound(lam, grid_step=1e-3):
    """Most negative lag correlation achievable by superposition models.

    Grid search over the Bernoulli success probability p of
    -p^2 kappa(lam / p) / lam; returns (minimum value, argmin p).
    """
    lam = float(lam)
    if not (lam > 0.0 and math.isfinite(lam)):
        raise ValueError("lam must be finite and positive")
    p = np.arange(grid_step, 1.0, grid_step)
    values = -(p * p) * kappa(lam / p) / lam
    i = int(np.argmin(values))
    return float(values[i]), float(p[i])


@dataclass(frozen=True)
class CorrelationBound:
    """Correlation floor at one lam: copula bound, superposition bound and
    the superposition argmin success probability."""

    lam: float
    nb: float
    super_nb: float
    p_star: float
    _slack: float = field(default=1e-9, repr=False)

    def __post_init__(self):
        if not (-1.0 - self._slack <= self.nb <= self.super_nb + self._slack <= self._slack):
            raise ValueError("bound ordering -1 <= nb <= super_nb <= 0 violated")


def correlation_bounds(lam):
    value, p_star = super_neg_bound(lam)
    return CorrelationBound(lam=float(lam), nb=neg_bound(lam), super_nb=value, p_star=p_star)
