"""Exact samplers for count series with Poisson marginal distributions.

Each generator delivers Poisson(lam) or Poisson(lam_t) marginals by
construction: discrete AR mixing, binomial-thinning autoregressions
(first order and the combined higher-order scheme), superposition of
correlated Bernoulli chains over independent Poisson counts, and the
Gaussian copula transform of a latent autoregression.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .latent_ar import LatentAR, simulate_latent
from .special import normal_cdf, poisson_quantile

__all__ = [
    "MeanModel",
    "RenewalLifetime",
    "CountSeries",
    "gen_dar1",
    "gen_inar1",
    "gen_cinar",
    "gen_super_renewal",
    "gen_super_clipped",
    "gen_copula",
    "write_series_csv",
    "read_series_csv",
]


@dataclass(frozen=True)
class MeanModel:
    """Log-link mean specification lam_t = exp(mu + beta' C_t).

    covariates is an n x q matrix aligned with the series index (a trend
    enters as a raw-index column t = 1..n); beta must match its width.
    With no covariates the mean is the constant exp(mu).
    """

    mu: float
    beta: np.ndarray = field(default_factory=lambda: np.empty(0))
    covariates: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, None]
            object.__setattr__(self, "covariates", cov)
            if cov.shape[1] != self.beta.size:
                raise ValueError(
                    f"{self.beta.size} coefficients for {cov.shape[1]} covariate columns"
                )
        elif self.beta.size:
            raise ValueError("coefficients supplied without covariates")

    @property
    def n(self):
        return None if self.covariates is None else self.covariates.shape[0]

    def lambdas(self, n=None):
        """Mean path lam_t, validated finite and positive."""
        if self.covariates is None:
            if n is None:
                raise ValueError("constant mean model needs an explicit length")
            lam = np.full(n, math.exp(self.mu))
        else:
            if n is not None and n != self.covariates.shape[0]:
                raise ValueError("requested length disagrees with covariate rows")
            lam = np.exp(self.mu + self.covariates @ self.beta)
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0.0):
            raise ValueError("mean path must be finite and positive")
        return lam

    def with_params(self, mu, beta):
        return MeanModel(mu=float(mu), beta=np.asarray(beta, dtype=float),
                         covariates=self.covariates)


@dataclass(frozen=True)
class RenewalLifetime:
    """Discrete lifetime on {1, ..., len(pmf)} with finite support.

    Finite support keeps E[L^2] finite, which rules out long-memory
    superpositions.  The support must be aperiodic (gcd 1).
    """

    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float)
        object.__setattr__(self, "pmf", pmf)
        if pmf.ndim != 1 or pmf.size == 0:
            raise ValueError("pmf must be a nonempty vector over {1, 2, ...}")
        if np.any(pmf < 0.0) or abs(pmf.sum() - 1.0) > 1e-12:
            raise ValueError("pmf must be nonnegative and sum to 1")
        support = np.flatnonzero(pmf > 0.0) + 1
        if math.gcd(*[int(s) for s in support]) != 1:
            raise ValueError("lifetime support must be aperiodic")

    @property
    def mean(self):
        return float(np.sum(self.pmf * np.arange(1, self.pmf.size + 1)))

    @property
    def bernoulli_p(self):
        """Stationary renewal indicator mean 1/E[L]."""
        return 1.0 / self.mean

    def delay_pmf(self):
        """First derived distribution P[L0 = k] = P[L > k] / E[L], k >= 0."""
        survival = 1.0 - np.concatenate([[0.0], np.cumsum(self.pmf)])[:-1]
        return survival / self.mean

    def renewal_probabilities(self, h_max):
        """u_h = P[renewal at h | renewal at 0] for a non-delayed process."""
        u = np.zeros(h_max + 1)
        u[0] = 1.0
        for h in range(1, h_max + 1):
            jmax = min(h, self.pmf.size)
            u[h] = float(np.dot(self.pmf[:jmax], u[h - jmax : h][::-1]))
        return u

    def gamma_b(self, h_max):
        """Autocovariance of the stationary renewal indicator sequence:
        gamma_B(h) = (1/mu)(u_h - 1/mu)."""
        p = self.bernoulli_p
        return p * (self.renewal_probabilities(h_max) - p)


@dataclass(frozen=True)
class CountSeries:
    """Observed counts with optional aligned covariates and provenance."""

    x: np.ndarray
    covariates: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x)
        if x.size == 0:
            raise ValueError("series must contain at least one observation")
        if np.any(x < 0) or not np.all(x == np.floor(x)):
            raise ValueError("counts must be nonnegative integers")
        object.__setattr__(self, "x", x.astype(np.int64))
        if self.covariates is not None:
            cov = np.asarray(self.covariates, dtype=float)
            if cov.ndim == 1:
                cov = cov[:, None]
            if cov.shape[0] != x.size:
                raise ValueError("covariate rows must align with the series")
            object.__setattr__(self, "covariates", cov)

    @property
    def n(self):
        return self.x.size


def _resolve_lambda(lam, n):
    """Accept a scalar, callable t -> lam_t (t = 1..n) or length-n array."""
    if callable(lam):
        path = np.asarray([lam(t) for t in range(1, n + 1)], dtype=float)
    else:
        arr = np.asarray(lam, dtype=float)
        path = np.full(n, float(arr)) if arr.ndim == 0 else arr.astype(float)
    if path.shape != (n,):
        raise ValueError(f"mean path must have length {n}")
    if not np.all(np.isfinite(path)) or np.any(path <= 0.0):
        raise ValueError("mean path must be finite and positive")
    return path


def gen_dar1(lam, p, n, seed):
    """Discrete AR(1): X_t = B_t X_{t-1} + (1 - B_t) A_t.

    Marginal Poisson(lam), Corr(X_t, X_{t+h}) = p^h, and values repeat with
    probability at least p.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("mixing probability must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    fresh = rng.poisson(lam, size=n)
    keep = rng.random(n) < p
    keep[0] = False
    # index of the most recent fresh draw at or before t
    src = np.maximum.accumulate(np.where(keep, -1, np.arange(n)))
    x = fresh[src]
    return CountSeries(
        x=x, meta={"family": "dar1", "lambda": float(lam), "p": float(p), "seed": seed}
    )


def _thinning_recursion(lam, alpha, phi, n, seed, burn_in):
    """Shared CINAR core; INAR(1) is the single-lag special case."""
    rng = np.random.default_rng(seed)
    r = len(phi)
    total = n + burn_in
    lags = rng.choice(r, size=total, p=phi) + 1
    innov = rng.poisson(lam * (1.0 - alpha), size=total)
    x = np.empty(total + r, dtype=np.int64)
    x[:r] = rng.poisson(lam, size=r)
    for t in range(r, total + r):
        donor = x[t - lags[t - r]]
        x[t] = rng.binomial(donor, alpha) + innov[t - r]
    return x[r + burn_in :]


def gen_inar1(lam, alpha, n, seed):
    """INAR(1): X_t = alpha o X_{t-1} + eps_t with Poisson(lam(1-alpha))
    innovations; marginal Poisson(lam), ACF alpha^h."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("thinning probability must lie in (0, 1)")
    x = _thinning_recursion(float(lam), float(alpha), [1.0], n, seed, burn_in=0)
    return CountSeries(
        x=x,
        meta={"family": "inar1", "lambda": float(lam), "alpha": float(alpha), "seed": seed},
    )


def gen_cinar(lam, alpha, phi, n, seed, burn_in=0):
    """Combined INAR(r): a multinomial decision picks which single lag is
    thinned each step, preserving the Poisson(lam) marginal for any order.

    The first r values are seeded IID Poisson(lam); the marginal law is
    exact from the start while the joint law is approximate, so a burn-in
    option is provided for joint-distribution studies.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if np.any(phi < 0.0) or abs(phi.sum() - 1.0) > 1e-12:
        raise ValueError("lag probabilities must be nonnegative and sum to 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("thinning probability must lie in (0, 1)")
    x = _thinning_recursion(float(lam), float(alpha), phi, n, seed, burn_in=burn_in)
    return CountSeries(
        x=x,
        meta={
            "family": "cinar",
            "lambda": float(lam),
            "alpha": float(alpha),
            "phi": [float(v) for v in phi],
            "seed": seed,
            "burn_in": burn_in,
        },
    )


def _sum_first_chains(bern, counts):
    """X_t = sum of the first counts[t] chains at time t (chains x n)."""
    csum = np.cumsum(bern, axis=0)
    x = np.zeros(counts.size, dtype=np.int64)
    pos = counts > 0
    x[pos] = csum[counts[pos] - 1, np.flatnonzero(pos)]
    return x


def gen_super_renewal(lam, lifetime, n, seed):
    """Superposition over stationary delayed renewal Bernoulli chains.

    N_t ~ Poisson(lam_t / p) independently with p = 1/E[L]; the same chain i
    is reused across time, so X_t = sum_{i <= N_t} B_{t,i} carries the
    renewal autocovariance.  Marginal Poisson(lam_t).
    """
    if not isinstance(lifetime, RenewalLifetime):
        lifetime = RenewalLifetime(np.asarray(lifetime, dtype=float))
    lam_path = _resolve_lambda(lam, n)
    p = lifetime.bernoulli_p
    rng = np.random.default_rng(seed)
    counts = rng.poisson(lam_path / p)
    m = int(counts.max())
    bern = np.zeros((max(m, 1), n), dtype=np.int64)
    support = np.arange(1, lifetime.pmf.size + 1)
    delay_support = np.arange(0, lifetime.pmf.size)
    delays = rng.choice(delay_support, size=max(m, 1), p=lifetime.delay_pmf())
    # renewals per chain in blocks of lifetimes until past n
    block = max(8, int(math.ceil(n / lifetime.mean)) + 8)
    for i in range(max(m, 1)):
        t_cur = int(delays[i])
        while t_cur <= n:
            if t_cur >= 1:
                bern[i, t_cur - 1] = 1
            draws = rng.choice(support, size=block, p=lifetime.pmf)
            times = t_cur + np.cumsum(draws)
            inside = times[times <= n]
            bern[i, inside - 1] = 1
            t_cur = int(times[-1])
    x = _sum_first_chains(bern, counts)
    return CountSeries(
        x=x,
        meta={
            "family": "super-renewal",
            "lifetime_pmf": [float(v) for v in lifetime.pmf],
            "p": p,
            "seed": seed,
        },
    )


def gen_super_clipped(lam, latent, n, seed):
    """Superposition with Bernoulli chains B_{t,i} = 1[Z_{t,i} > 0] from IID
    copies of the latent autoregression; the half-line clip fixes p = 1/2.

    gamma_B(h) = arcsin(rho_Z(h)) / (2 pi), so negative latent correlation
    produces negatively correlated counts.  Marginal Poisson(lam_t).
    """
    if not isinstance(latent, LatentAR):
        raise TypeError("latent must be a LatentAR model")
    lam_path = _resolve_lambda(lam, n)
    p = 0.5
    rng = np.random.default_rng(seed)
    counts = rng.poisson(lam_path / p)
    m = int(counts.max())
    z = simulate_latent(latent, n, rng, n_paths=max(m, 1))
    bern = (np.atleast_2d(z) > 0.0).astype(np.int64)
    x = _sum_first_chains(bern, counts)
    return CountSeries(
        x=x,
        meta={
            "family": "super-clipped",
            "phi": [float(v) for v in latent.phi],
            "p": p,
            "seed": seed,
        },
    )


def gen_copula(mean_model, latent, n=None, seed=0):
    """Gaussian copula: X_t = F_{lam_t}^{-1}(Phi(Z_t)) with an exactly
    stationary latent path; the marginal is Poisson(lam_t) exactly."""
    if not isinstance(latent, LatentAR):
        raise TypeError("latent must be a LatentAR model")
    lam_path = mean_model.lambdas(n)
    n = lam_path.size
    rng = np.random.default_rng(seed)
    z = simulate_latent(latent, n, rng)
    u = np.clip(normal_cdf(z), 1e-300, 1.0 - 1e-16)
    x = poisson_quantile(lam_path, u)
    return CountSeries(
        x=np.atleast_1d(x),
        covariates=mean_model.covariates,
        meta={
            "family": "copula",
            "mu": mean_model.mu,
            "beta": [float(v) for v in mean_model.beta],
            "phi": [float(v) for v in latent.phi],
            "seed": seed,
        },
    )


def write_series_csv(series, path):
    """Write `t,x[,c1..cq]` rows; floats carry full precision."""
    cov = series.covariates
    q = 0 if cov is None else cov.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x"] + [f"c{j + 1}" for j in range(q)])
        for t in range(series.n):
            row = [t + 1, int(series.x[t])]
            if q:
                row += [repr(float(v)) for v in cov[t]]
            writer.writerow(row)


def read_series_csv(path, count_col="x", covariate_cols=None):
    """Read a series written by write_series_csv or any CSV with a count
    column; named covariate columns are pulled into the matrix in order."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or count_col not in reader.fieldnames:
            raise ValueError(f"count column {count_col!r} not found in {path}")
        missing = [c for c in (covariate_cols or []) if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"covariate column(s) {missing} not found in {path}")
        xs, rows = [], []
        for i, record in enumerate(reader, start=2):
            raw = record[count_col]
            try:
                val = float(raw)
            except ValueError:
                raise ValueError(f"non-numeric count {raw!r} at row {i}") from None
            if val < 0 or val != int(val):
                raise ValueError(f"count must be a nonnegative integer at row {i}: {raw}")
            xs.append(int(val))
            if covariate_cols:
                rows.append([float(record[c]) for c in covariate_cols])
    cov = np.asarray(rows) if covariate_cols else None
    return CountSeries(x=np.asarray(xs), covariates=cov, meta={"source": str(path)})
