"""Generalized inverse Gaussian distribution: moments and random variates.

Density on x > 0, up to normalization:

    f(x; mu, nu, xi)  propto  x^(mu-1) exp{-(nu*x + xi/x)/2},

with nu > 0 and xi >= 0 (xi = 0 degenerates to a gamma distribution and
then requires mu > 0).  Moments are ratios of modified Bessel functions
and are always evaluated as differences of log-Bessel values, so they
remain accurate when both Bessel factors underflow.

Sampling uses the two-sided exponential rejection scheme of Devroye for
the standardized two-parameter form, which stays uniformly efficient as
the concentration parameter tends to zero; negative index is handled by
the reciprocal symmetry and the xi = 0 gamma case is short-circuited.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .specfun import log_bessel_k


@dataclass(frozen=True)
class GigParams:
    """Index ``mu``, linear-rate ``nu`` and reciprocal-rate ``xi``."""

    mu: float
    nu: float
    xi: float

    def __post_init__(self):
        if not (self.nu > 0.0):
            raise ValueError(f"gig requires nu > 0, got {self.nu}")
        if self.xi < 0.0:
            raise ValueError(f"gig requires xi >= 0, got {self.xi}")
        if self.xi == 0.0 and self.mu <= 0.0:
            raise ValueError("gig with xi = 0 requires mu > 0 (gamma limit)")


def gig_logpdf(x, params: GigParams):
    """Normalized log-density; xi > 0 required."""
    if params.xi == 0.0:
        # gamma limit: Gamma(mu, rate nu/2)
        k, rate = params.mu, 0.5 * params.nu
        return k * math.log(rate) - math.lgamma(k) + (k - 1.0) * np.log(x) - rate * np.asarray(x)
    s = math.sqrt(params.nu * params.xi)
    log_norm = 0.5 * params.mu * math.log(params.nu / params.xi) \
        - math.log(2.0) - log_bessel_k(params.mu, s)
    x = np.asarray(x, dtype=float)
    return log_norm + (params.mu - 1.0) * np.log(x) - 0.5 * (params.nu * x + params.xi / x)


def gig_moments(mu, nu, xi):
    """(E[X], E[1/X]) elementwise, through log-Bessel differences."""
    mu, nu, xi = np.broadcast_arrays(np.asarray(mu, dtype=float),
                                     np.asarray(nu, dtype=float),
                                     np.asarray(xi, dtype=float))
    if np.any(nu <= 0.0) or np.any(xi <= 0.0):
        raise ValueError("gig_moments requires nu > 0 and xi > 0")
    s = np.sqrt(nu * xi)
    log_ratio_up = log_bessel_k(mu + 1.0, s) - log_bessel_k(mu, s)
    log_ratio_dn = log_bessel_k(mu - 1.0, s) - log_bessel_k(mu, s)
    half_log = 0.5 * (np.log(xi) - np.log(nu))
    mean = np.exp(half_log + log_ratio_up)
    inv_mean = np.exp(-half_log + log_ratio_dn)
    return mean, inv_mean


def gig_mean(params: GigParams) -> float:
    """E[X]; gamma closed form when xi = 0."""
    if params.xi == 0.0:
        return 2.0 * params.mu / params.nu
    mean, _ = gig_moments(params.mu, params.nu, params.xi)
    return float(mean)


def gig_inv_mean(params: GigParams) -> float:
    """E[1/X]; undefined for xi = 0 unless mu > 1."""
    if params.xi == 0.0:
        if params.mu <= 1.0:
            raise ValueError("E[1/X] diverges for xi = 0 with mu <= 1")
        return 0.5 * params.nu / (params.mu - 1.0)
    _, inv_mean = gig_moments(params.mu, params.nu, params.xi)
    return float(inv_mean)


def _psi(x, alpha, lam):
    return -alpha * (np.cosh(x) - 1.0) - lam * (np.expm1(x) - x)


def _dpsi(x, alpha, lam):
    return -alpha * np.sinh(x) - lam * np.expm1(x)


def _devroye_setup(lam, omega):
    """Envelope constants for the standardized two-parameter sampler.

    lam >= 0 elementwise; omega > 0.  Returns the left/right window ends
    and the three-piece envelope parameters.
    """
    alpha = np.sqrt(omega * omega + lam * lam) - lam

    v = -_psi(1.0, alpha, lam)
    with np.errstate(divide="ignore"):
        t_big = np.sqrt(2.0 / (alpha + lam))
        t_small = np.log(4.0 / (alpha + 2.0 * lam))
    t = np.where(v > 2.0, t_big, np.where(v >= 0.5, 1.0, t_small))

    u = -_psi(-1.0, alpha, lam)
    with np.errstate(divide="ignore", over="ignore"):
        s_big = np.sqrt(4.0 / (alpha * np.cosh(1.0) + lam))
        root = np.sqrt(1.0 / (alpha * alpha) + 2.0 / alpha)
        s_log = np.log1p(1.0 / alpha + root)
        inv_lam = np.where(lam > 0.0, 1.0 / np.where(lam > 0.0, lam, 1.0), np.inf)
    s_small = np.minimum(inv_lam, s_log)
    s = np.where(u > 2.0, s_big, np.where(u >= 0.5, 1.0, s_small))

    eta = -_psi(t, alpha, lam)
    zeta = -_dpsi(t, alpha, lam)
    theta = -_psi(-s, alpha, lam)
    xi = _dpsi(-s, alpha, lam)
    p = 1.0 / xi
    r = 1.0 / zeta
    td = t - r * eta
    sd = s - p * theta
    q = td + sd
    return alpha, t, s, eta, zeta, theta, xi, p, r, td, sd, q


def gig_sample_many(mu, nu, xi, size, rng) -> np.ndarray:
    """Vectorized draws, one per element of the broadcast parameters."""
    mu, nu, xi = np.broadcast_arrays(np.asarray(mu, dtype=float),
                                     np.asarray(nu, dtype=float),
                                     np.asarray(xi, dtype=float))
    mu = np.broadcast_to(mu, size).ravel().copy()
    nu = np.broadcast_to(nu, size).ravel().copy()
    xi = np.broadcast_to(xi, size).ravel().copy()
    n = mu.size
    out = np.empty(n)

    gamma_case = xi == 0.0
    if np.any(gamma_case):
        if np.any(mu[gamma_case] <= 0.0):
            raise ValueError("gig with xi = 0 requires mu > 0")
        out[gamma_case] = rng.gamma(shape=mu[gamma_case],
                                    scale=2.0 / nu[gamma_case])
    gen = ~gamma_case
    if np.any(gen):
        if np.any(nu[gen] <= 0.0) or np.any(xi[gen] < 0.0):
            raise ValueError("gig requires nu > 0 and xi >= 0")
        out[gen] = _sample_general(mu[gen], nu[gen], xi[gen], rng)
    return out.reshape(size)


def _sample_general(mu, nu, xi, rng):
    omega = np.sqrt(nu * xi)
    swap = mu < 0.0
    lam = np.abs(mu)
    alpha, t, s, eta, zeta, theta, xi_e, p, r, td, sd, q = _devroye_setup(lam, omega)

    n = lam.size
    y = np.empty(n)
    active = np.ones(n, dtype=bool)
    denom = p + q + r
    for _ in range(1000):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        m = idx.size
        u = rng.random(m)
        v = rng.random(m)
        w = rng.random(m)
        cut = u * denom[idx]
        pick_mid = cut < q[idx]
        pick_right = ~pick_mid & (cut < q[idx] + r[idx])
        cand = np.where(
            pick_mid,
            -sd[idx] + q[idx] * v,
            np.where(pick_right,
                     td[idx] - r[idx] * np.log(v),
                     -sd[idx] + p[idx] * np.log(v)),
        )
        # three-piece envelope value at the candidate
        g = np.ones(m)
        right = cand > td[idx]
        left = cand < -sd[idx]
        g = np.where(right, np.exp(-eta[idx] - zeta[idx] * (cand - t[idx])), g)
        g = np.where(left, np.exp(-theta[idx] + xi_e[idx] * (cand + s[idx])), g)
        accept = w * g <= np.exp(_psi(cand, alpha[idx], lam[idx]))
        took = idx[accept]
        y[took] = cand[accept]
        active[took] = False
    else:
        raise RuntimeError("gig rejection sampler failed to terminate")

    mode = lam / omega + np.sqrt(1.0 + (lam / omega) ** 2)
    x = np.exp(y) * mode
    x = np.where(swap, 1.0 / x, x)
    return x * np.sqrt(xi / nu)


def gig_sample(params: GigParams, rng) -> float:
    """One draw from the three-parameter density."""
    return float(gig_sample_many(params.mu, params.nu, params.xi, 1, rng)[0])
