"""Post-fit diagnostics for Gaussian-copula count models.

Latent residuals recover the driving Gaussian process from the counts via
the truncated-normal conditional mean E[Z_t | X_t]; AR-filtered versions of
those residuals should look like white noise when the latent order is
right.  The nonrandomized probability integral transform (PIT) checks the
marginal: its mean CDF is uniform when the predictive distributions are
correct, and the Q statistic (mean absolute deviation of the 10-bin PIT
histogram from uniformity) gets its p-value from a parametric bootstrap.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .fit import FitResult, fit_ghk, ghk_loglik, make_particles
from .generate import CountSeries, MeanModel, gen_copula
from .latent_ar import make_latent_ar
from .special import normal_pdf, normal_quantile, poisson_cdf

__all__ = [
    "ResidualSeries",
    "AcfSummary",
    "PitSummary",
    "latent_residuals",
    "residual_acf",
    "pit_summary",
]


@dataclass(frozen=True)
class ResidualSeries:
    """Latent-mean estimates zhat, AR-filtered residuals rhat (t > r), and
    a mask flagging observations whose probability cell underflowed."""

    zhat: np.ndarray
    rhat: np.ndarray
    missing: np.ndarray
    order: int


@dataclass(frozen=True)
class AcfSummary:
    lags: np.ndarray
    acf: np.ndarray
    pacf: np.ndarray
    band: float


@dataclass(frozen=True)
class PitSummary:
    """Mean PIT CDF on a grid, 10-bin histogram, Q statistic and its
    simulated p-value."""

    grid: np.ndarray
    fbar: np.ndarray
    bins: np.ndarray
    q: float
    p_value: float
    b_sims: int
    warnings: list = field(default_factory=list)


def latent_residuals(series, mean_model, latent):
    """Estimate Z_t from X_t alone by the truncated-normal conditional mean
    (phi(a_t) - phi(b_t)) / (F(x_t) - F(x_t - 1)), then AR-filter:
    rhat_t = zhat_t - sum_k phi_k zhat_{t-k} for t > r."""
    x = series.x.astype(float)
    lams = mean_model.lambdas(series.n)
    lo = poisson_cdf(lams, x - 1.0)
    hi = poisson_cdf(lams, x)
    cell = hi - lo
    a = normal_quantile(np.minimum(lo, 1.0))
    b = normal_quantile(np.minimum(hi, 1.0))
    dens_a = np.where(np.isfinite(a), normal_pdf(a), 0.0)
    dens_b = np.where(np.isfinite(b), normal_pdf(b), 0.0)
    missing = cell <= 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        zhat = (dens_a - dens_b) / cell
    zhat = np.where(missing, np.nan, zhat)
    r = latent.order
    if r:
        filt = zhat[r:].copy()
        for k in range(1, r + 1):
            filt = filt - latent.phi[k - 1] * zhat[r - k : series.n - k]
    else:
        filt = zhat.copy()
    return ResidualSeries(zhat=zhat, rhat=filt, missing=missing, order=r)


def residual_acf(residuals, h_max=20):
    """Sample ACF and (Durbin-Levinson) PACF with +-1.96/sqrt(n) bands."""
    values = residuals.rhat if isinstance(residuals, ResidualSeries) else residuals
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    n = values.size
    if n < 20:
        raise ValueError("need at least 20 residuals")
    if h_max >= n:
        raise ValueError("h_max must be below the series length")
    centered = values - values.mean()
    denom = float(centered @ centered)
    if denom <= 0.0:
        raise ValueError("residuals are constant; autocorrelation undefined")
    acf = np.empty(h_max + 1)
    acf[0] = 1.0
    for h in range(1, h_max + 1):
        acf[h] = float(centered[:-h] @ centered[h:]) / denom
    pacf = _pacf_from_acf(acf)
    return AcfSummary(
        lags=np.arange(h_max + 1),
        acf=acf,
        pacf=pacf,
        band=1.96 / math.sqrt(n),
    )


def _pacf_from_acf(acf):
    h_max = acf.size - 1
    pacf = np.empty(h_max)
    phi_prev = np.empty(0)
    v = 1.0
    for t in range(1, h_max + 1):
        if t == 1:
            refl = acf[1]
            phi_new = np.array([refl])
        else:
            refl = (acf[t] - float(phi_prev @ acf[t - 1 : 0 : -1])) / v
            phi_new = np.concatenate([phi_prev - refl * phi_prev[::-1], [refl]])
        v = v * (1.0 - refl * refl)
        pacf[t - 1] = refl
        phi_prev = phi_new
        if v <= 0.0:
            pacf[t:] = np.nan
            break
    return pacf


def _pit_mean_cdf(u_values, p_lo, p_hi):
    """Mean over t of the piecewise-linear conditional PIT CDF F_t(u|x_t)."""
    u = np.asarray(u_values, dtype=float)[:, None]
    lo = p_lo[None, :]
    hi = p_hi[None, :]
    denom = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = (u - lo) / denom
    inner = np.where(denom > 0.0, np.clip(frac, 0.0, 1.0), (u >= hi) * 1.0)
    out = np.where(u <= lo, 0.0, np.where(u >= hi, 1.0, inner))
    return out.mean(axis=1)


def _pit_q_statistic(p_lo, p_hi):
    edges = np.linspace(0.0, 1.0, 11)
    fbar_edges = _pit_mean_cdf(edges, p_lo, p_hi)
    bins = np.diff(fbar_edges)
    return bins, float(np.mean(np.abs(bins - 0.1)))


def _predictive_cells(series, theta, eta, particles):
    _, predictive = ghk_loglik(series, theta, eta, particles, collect_predictive=True)
    return predictive


def pit_summary(
    series,
    fit,
    particles=None,
    grid_size=100,
    b_sims=500,
    seed=0,
    refit=False,
    m=300,
):
    """Nonrandomized mean PIT, 10-bin histogram, Q and its bootstrap p-value.

    The null distribution of Q is simulated from the fitted model at the
    fitted parameters (parametric bootstrap, fixed covariates).  With
    refit=True each bootstrap series is refitted before its Q is computed;
    the default keeps the parameters fixed, which is much cheaper and
    calibrates well in practice.

    fit may be a FitResult or a plain (theta, eta) tuple.
    """
    if isinstance(fit, FitResult):
        theta, eta = fit.theta_hat, fit.eta_hat
    else:
        theta, eta = fit
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        eta = np.atleast_1d(np.asarray(eta, dtype=float)) if len(eta) else np.empty(0)
    warnings = []
    if b_sims < 100:
        warnings.append(f"b_sims={b_sims} below 100; p-value resolution is coarse")
    if particles is None:
        particles = make_particles(series.n, m, np.random.SeedSequence(seed).spawn(1)[0])
    p_lo, p_hi = _predictive_cells(series, theta, eta, particles)
    bins, q_obs = _pit_q_statistic(p_lo, p_hi)
    grid = np.linspace(0.0, 1.0, grid_size + 1)
    fbar = _pit_mean_cdf(grid, p_lo, p_hi)

    mean_model = MeanModel(mu=theta[0], beta=theta[1:], covariates=series.covariates)
    latent = make_latent_ar(eta)
    exceed = 0
    boot_root = np.random.SeedSequence(seed)
    children = boot_root.spawn(b_sims)
    for child in children:
        sim_seed, fit_seed, crn_seed = child.spawn(3)
        sim = gen_copula(mean_model, latent, n=series.n, seed=sim_seed)
        sim = CountSeries(x=sim.x, covariates=series.covariates, meta=sim.meta)
        if refit:
            boot_fit = fit_ghk(
                sim, latent_order=latent.order, m=max(particles.m, 100),
                seed=fit_seed, compute_se=False,
            )
            theta_b, eta_b = boot_fit.theta_hat, boot_fit.eta_hat
        else:
            theta_b, eta_b = theta, eta
        boot_particles = make_particles(series.n, particles.m, crn_seed)
        lo_b, hi_b = _predictive_cells(sim, theta_b, eta_b, boot_particles)
        _, q_sim = _pit_q_statistic(lo_b, hi_b)
        if q_sim >= q_obs:
            exceed += 1
    p_value = exceed / b_sims if b_sims else float("nan")
    return PitSummary(
        grid=grid,
        fbar=fbar,
        bins=bins,
        q=q_obs,
        p_value=p_value,
        b_sims=b_sims,
        warnings=warnings,
    )
