"""Causal AR(r) kernel for the latent Gaussian process.

The latent process is standardized: the innovation variance is derived from
the AR coefficients so that Var(Z_t) = 1 exactly.  Startup predictions for
t <= r use the exact conditional distribution obtained from the
Durbin-Levinson recursion on the autocorrelations; from t > r onward the
one-step predictor is the AR recursion itself with standard deviation
sigma_eps.  Nonstationary prediction systems are solved by Cholesky
factorization (Durbin-Levinson does not apply there).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import signal as ssig

__all__ = [
    "LatentAR",
    "PredictionState",
    "NonCausalError",
    "FactorizationError",
    "make_latent_ar",
    "initial_state",
    "one_step",
    "prediction_coefficients",
    "cholesky_predictors",
    "pacf_to_phi",
    "phi_to_pacf",
    "simulate_latent",
]


class NonCausalError(ValueError):
    """AR polynomial has roots on or inside the unit circle."""

    def __init__(self, phi, roots):
        self.phi = np.asarray(phi, dtype=float)
        self.roots = roots
        super().__init__(
            f"AR coefficients {list(self.phi)} are not causal; "
            f"offending roots {[complex(r) for r in roots]}"
        )


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization failed; pivot_index is 0-based."""

    def __init__(self, message, pivot_index=None):
        self.pivot_index = pivot_index
        super().__init__(message)


@dataclass(frozen=True)
class LatentAR:
    """Causal AR(r) with unit marginal variance.

    phi are the autoregression coefficients, sigma_eps the innovation
    standard deviation making Var(Z_t) = 1, and acf caches rho_Z(0..h).
    """

    phi: np.ndarray
    order: int
    sigma_eps: float
    acf: np.ndarray = field(repr=False)

    def autocorrelations(self, h_max):
        """rho_Z(0..h_max), extending the cache by the AR recursion."""
        if h_max < self.acf.size:
            return self.acf[: h_max + 1]
        rho = np.empty(h_max + 1)
        rho[: self.acf.size] = self.acf
        for h in range(self.acf.size, h_max + 1):
            rho[h] = sum(
                self.phi[k - 1] * rho[h - k] for k in range(1, self.order + 1)
            )
        return rho

    def stationary_covariance(self, size):
        return sla.toeplitz(self.autocorrelations(size - 1))


def make_latent_ar(phi, h_max=None):
    """Validate causality, solve Yule-Walker, normalize to unit variance.

    phi may be empty (white noise).  Raises NonCausalError when any root of
    1 - phi_1 z - ... - phi_r z^r lies on or inside the unit circle.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float)) if phi is not None else np.empty(0)
    if phi.size and not np.all(np.isfinite(phi)):
        raise ValueError("AR coefficients must be finite")
    r = phi.size
    if r == 0:
        acf = np.array([1.0]) if h_max is None else np.zeros(h_max + 1)
        acf[0] = 1.0
        return LatentAR(phi=phi, order=0, sigma_eps=1.0, acf=acf)

    # Schur-Cohn: causal iff every partial autocorrelation lies in (-1, 1)
    work = phi.copy()
    for k in range(r, 0, -1):
        pk = work[-1]
        if not abs(pk) < 1.0 - 1e-12:
            poly = np.concatenate([[1.0], -phi])
            roots = np.roots(poly[::-1])
            bad = roots[np.abs(roots) <= 1.0 + 1e-8]
            raise NonCausalError(phi, bad if bad.size else roots)
        if k > 1:
            work = (work[:-1] + pk * work[:-1][::-1]) / (1.0 - pk * pk)

    rho = _yule_walker_acf(phi)
    sigma2 = 1.0 - float(np.dot(phi, rho[1 : r + 1]))
    if sigma2 <= 0.0:
        raise NonCausalError(phi, np.roots(np.concatenate([[1.0], -phi])[::-1]))
    horizon = max(h_max if h_max is not None else 0, r)
    model = LatentAR(phi=phi, order=r, sigma_eps=math.sqrt(sigma2), acf=rho)
    if horizon > r:
        model = LatentAR(
            phi=phi, order=r, sigma_eps=math.sqrt(sigma2),
            acf=model.autocorrelations(horizon),
        )
    return model


def _yule_walker_acf(phi):
    """Solve the Yule-Walker equations for rho(0..r) given phi."""
    r = phi.size
    a = np.eye(r)
    b = phi.copy()
    for j in range(1, r + 1):
        for k in range(1, r + 1):
            lag = abs(j - k)
            if lag > 0:
                a[j - 1, lag - 1] -= phi[k - 1]
    rho = np.linalg.solve(a, b)
    return np.concatenate([[1.0], rho])


def _durbin_levinson(rho, steps):
    """One-step predictor coefficients and MSEs from autocorrelations.

    Returns (coeffs, mse) where coeffs[t] predicts Z_{t+1} from Z_t..Z_1
    (most recent value first) and mse[t] is the prediction variance; entry
    t = 0 is the unconditional predictor (empty coefficients, variance 1).
    """
    coeffs = [np.empty(0)]
    mse = [1.0]
    phi_prev = np.empty(0)
    v = 1.0
    for t in range(1, steps + 1):
        if t == 1:
            refl = rho[1]
            phi_new = np.array([refl])
        else:
            refl = (rho[t] - float(np.dot(phi_prev, rho[t - 1 : 0 : -1]))) / v
            phi_new = np.concatenate([phi_prev - refl * phi_prev[::-1], [refl]])
        v = v * (1.0 - refl * refl)
        coeffs.append(phi_new)  # lag-1 weight first (most recent value)
        mse.append(v)
        phi_prev = phi_new
    return coeffs, mse


def prediction_coefficients(model, n):
    """Per-time one-step prediction weights and standard deviations.

    For time t (1-based) the predictor of Z_t given z_{t-1}, ..., z_1 is
    coeffs[t-1] @ (z_{t-1}, ..., z_{t-len}) with the most recent value
    first; sds[t-1] is the conditional standard deviation.  For t > r the
    weights equal phi and the standard deviation equals sigma_eps.
    """
    r = model.order
    startup = min(r, n - 1) if n >= 1 else 0
    rho = model.autocorrelations(max(startup, 1))
    dl_coeffs, dl_mse = _durbin_levinson(rho, startup)
    coeffs = []
    sds = []
    for t in range(1, n + 1):
        m = t - 1
        if m < r:
            coeffs.append(dl_coeffs[m])
            sds.append(math.sqrt(dl_mse[m]))
        else:
            coeffs.append(model.phi)
            sds.append(model.sigma_eps)
    return coeffs, np.array(sds)


@dataclass(frozen=True)
class PredictionState:
    """Rolling one-step prediction: zhat/r for the next observation, plus
    the retained history needed to advance."""

    model: LatentAR
    t: int
    zhat: float
    r: float
    history: tuple

    @property
    def sd(self):
        return self.r


def initial_state(model):
    return PredictionState(model=model, t=1, zhat=0.0, r=1.0, history=())


def one_step(state, z_new):
    """Advance the predictor after observing z at the current time."""
    model = state.model
    r = model.order
    history = (float(z_new),) + state.history
    if len(history) > max(r, 1):
        history = history[: max(r, 1)]
    t_next = state.t + 1
    m = t_next - 1
    if m >= r:
        zhat = float(np.dot(model.phi, history[:r])) if r else 0.0
        sd = model.sigma_eps
    else:
        rho = model.autocorrelations(m)
        coeffs, mse = _durbin_levinson(rho, m)
        zhat = float(np.dot(coeffs[m], history[:m]))
        sd = math.sqrt(mse[m])
    return PredictionState(model=model, t=t_next, zhat=zhat, r=sd, history=history)


def cholesky_predictors(cov, target, pivot_tol=1e-12):
    """Solve cov @ w = target by Cholesky and triangular substitution.

    Raises FactorizationError (with the 0-based pivot index) when the
    matrix is not numerically positive definite.
    """
    cov = np.asarray(cov, dtype=float)
    target = np.asarray(target, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance matrix must be square")
    if target.shape[0] != cov.shape[0]:
        raise ValueError("target length must match covariance order")
    try:
        chol, lower = sla.cho_factor(cov, lower=True, check_finite=False)
    except np.linalg.LinAlgError as err:
        index = _leading_minor_index(err)
        raise FactorizationError(str(err), pivot_index=index) from err
    pivots = np.diag(chol) ** 2
    small = np.flatnonzero(pivots <= pivot_tol)
    if small.size:
        raise FactorizationError(
            f"pivot {pivots[small[0]]:.3e} at index {small[0]} below tolerance",
            pivot_index=int(small[0]),
        )
    w = sla.cho_solve((chol, lower), target, check_finite=False)
    resid = np.max(np.abs(cov @ w - target))
    scale = np.max(np.abs(target)) if target.size else 0.0
    if scale > 0.0 and resid > 1e-8 * scale:
        raise FactorizationError(
            f"solution residual {resid:.3e} exceeds 1e-8 * |target|", pivot_index=None
        )
    return w


def _leading_minor_index(err):
    text = str(err)
    head = text.split("-th", 1)[0].strip()
    try:
        return int(head) - 1
    except ValueError:
        return None


def _levinson_phi(pacf):
    """AR coefficients from partial autocorrelations (Levinson recursion)."""
    phi = np.empty(0)
    for k, pk in enumerate(pacf, start=1):
        if k == 1:
            phi = np.array([pk])
        else:
            phi = np.concatenate([phi - pk * phi[::-1], [pk]])
    return phi


def pacf_to_phi(psi):
    """Map unconstrained coordinates through tanh and Levinson to a causal
    AR coefficient vector.

    The partial autocorrelations are kept a hair inside (-1, 1) so that the
    image passes the causality check even for extreme optimizer excursions.
    """
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    if psi.size == 0:
        return np.empty(0)
    pacf = np.clip(np.tanh(psi), -1.0 + 1e-6, 1.0 - 1e-6)
    return _levinson_phi(pacf)


def phi_to_pacf(phi):
    """Inverse of pacf_to_phi: unconstrained coordinates for a causal phi."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if phi.size == 0:
        return np.empty(0)
    pacf = np.empty(phi.size)
    work = phi.copy()
    for k in range(phi.size, 0, -1):
        pk = work[-1]
        if abs(pk) >= 1.0:
            raise NonCausalError(phi, [])
        pacf[k - 1] = pk
        if k > 1:
            work = (work[:-1] + pk * work[:-1][::-1]) / (1.0 - pk * pk)
    return np.arctanh(np.clip(pacf, -1.0 + 1e-12, 1.0 - 1e-12))


def simulate_latent(model, n, rng, n_paths=1):
    """Exact stationary simulation of the latent AR, shape (n_paths, n).

    The first r values are drawn from the stationary distribution via the
    Cholesky factor of the r x r Toeplitz correlation block, so no burn-in
    is required.
    """
    r = model.order
    if n < 1:
        raise ValueError("need n >= 1")
    eps = rng.standard_normal((n_paths, n))
    if r == 0:
        z = eps
        return z[0] if n_paths == 1 else z
    init_len = min(r, n)
    chol = np.linalg.cholesky(model.stationary_covariance(init_len))
    z0 = eps[:, :init_len] @ chol.T
    if n <= r:
        return z0[0] if n_paths == 1 else z0
    a = np.concatenate([[1.0], -model.phi])
    x = model.sigma_eps * eps[:, r:]
    zi = np.empty((n_paths, r))
    for i in range(n_paths):
        zi[i] = ssig.lfiltic([1.0], a, z0[i, ::-1])
    rest, _ = ssig.lfilter([1.0], a, x, axis=1, zi=zi)
    out = np.concatenate([z0, rest], axis=1)
    return out[0] if n_paths == 1 else out
