"""Blocked Gibbs sampler for the TPB normal scale-mixture regression model.

Model: y = X beta + eps, eps ~ N(0, sigma^2 I), beta_j ~ N(0, sigma^2 tau_j),
tau_j ~ Gamma(a, lambda_j), lambda_j ~ Gamma(b, phi), sigma^-2 ~
Gamma(c0/2, d0/2), and optionally phi ~ Gamma(1/2, omega),
omega ~ Gamma(1/2, 1).

Every full conditional is conjugate: beta is multivariate normal, the
error precision is gamma, each tau_j is generalized inverse Gaussian,
each lambda_j is gamma, and with the hierarchical option phi and omega
are gamma.  The scan order is fixed (beta, sigma^-2, tau, lambda, phi,
omega) so a seed pins the whole chain.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .gig import gig_sample_many
from .model import FitReport, PriorConfig, RegressionDataset, Stopwatch, SufficientStats, build_stats

# relative floor applied to beta_j^2/sigma^2 before the GIG draw; the
# rejection envelopes degenerate at an exactly-zero reciprocal rate
_XI_FLOOR = 1e-12


@dataclass(frozen=True)
class GibbsState:
    beta: np.ndarray
    sigma2_inv: float
    tau: np.ndarray
    lam: np.ndarray
    phi: float
    omega: float

    @property
    def sigma2(self) -> float:
        return 1.0 / self.sigma2_inv


@dataclass(frozen=True)
class GibbsSchedule:
    total: int
    burn_in: int
    thin: int = 1

    def __post_init__(self):
        if self.total <= 0 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("schedule requires total > 0, burn_in >= 0, thin >= 1")
        if self.burn_in >= self.total:
            raise ValueError("burn_in must be smaller than the total iteration count")

    @property
    def stored(self) -> int:
        return (self.total - self.burn_in) // self.thin


@dataclass
class GibbsChain:
    """Thinned post-burn-in draws plus the schedule that produced them."""

    beta: np.ndarray      # (stored, p)
    sigma2: np.ndarray    # (stored,)
    tau: np.ndarray       # (stored, p)
    lam: np.ndarray       # (stored, p)
    phi: np.ndarray       # (stored,)
    omega: np.ndarray     # (stored,)
    burn_in: int
    thin: int
    total_iterations: int
    seed: Optional[int]


def _chol_with_jitter(A: np.ndarray):
    """Lower Cholesky factor, escalating a diagonal jitter on failure."""
    scale = float(np.mean(np.diag(A)))
    jitter = 0.0
    for _ in range(8):
        try:
            return linalg.cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
        except linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-12 * max(scale, 1.0))
    raise NumericalError(
        f"Cholesky factorization failed even with jitter {jitter:.2e}; "
        f"diag range [{np.min(np.diag(A)):.3e}, {np.max(np.diag(A)):.3e}]")


def _draw_beta_direct(state: GibbsState, stats: SufficientStats,
                      rng: np.random.Generator) -> np.ndarray:
    # beta | . ~ N((X'X + T^-1)^-1 X'y, sigma^2 (X'X + T^-1)^-1)
    A = stats.xtx + np.diag(1.0 / state.tau)
    L = _chol_with_jitter(A)
    mean = linalg.cho_solve((L, True), stats.xty)
    sigma = 1.0 / np.sqrt(state.sigma2_inv)
    z = rng.standard_normal(stats.p)
    return mean + sigma * linalg.solve_triangular(L, z, lower=True, trans="T")


def _draw_beta_woodbury(state: GibbsState, X: np.ndarray, y: np.ndarray,
                        rng: np.random.Generator) -> np.ndarray:
    # n x n route for p > n; same normal law as the direct factorization
    n, p = X.shape
    sigma = 1.0 / np.sqrt(state.sigma2_inv)
    u = np.sqrt(state.tau) * rng.standard_normal(p)
    v = X @ u + rng.standard_normal(n)
    M = (X * state.tau) @ X.T + np.eye(n)
    L = _chol_with_jitter(M)
    w = linalg.cho_solve((L, True), y / sigma - v)
    theta = u + state.tau * (X.T @ w)
    return sigma * theta


def gibbs_step(state: GibbsState, stats: SufficientStats, prior: PriorConfig,
               rng: np.random.Generator, design=None) -> GibbsState:
    """One systematic scan over all full conditionals.

    ``design`` is an optional (X, y) pair enabling the n x n sampling
    route for the regression block; it draws from the identical
    distribution as the p x p factorization and is selected by the runner
    when p > n.
    """
    a, b = prior.tpb.a, prior.tpb.b
    n, p = stats.n, stats.p

    if design is not None:
        X, y = design
        beta = _draw_beta_woodbury(state, X, y, rng)
        resid = y - X @ beta
        rss = float(resid @ resid)
    else:
        beta = _draw_beta_direct(state, stats, rng)
        rss = float(stats.yty - 2.0 * beta @ stats.xty + beta @ stats.xtx @ beta)

    c_star = 0.5 * (n + p + prior.c0)
    d_star = 0.5 * (rss + float(beta**2 @ (1.0 / state.tau)) + prior.d0)
    sigma2_inv = rng.gamma(c_star, 1.0 / d_star)
    sigma2 = 1.0 / sigma2_inv

    xi = np.maximum(beta**2 / sigma2, _XI_FLOOR * sigma2)
    tau = gig_sample_many(a - 0.5, 2.0 * state.lam, xi, p, rng)

    lam = rng.gamma(a + b, 1.0 / (tau + state.phi), size=p)

    if prior.phi_hierarchical:
        phi = rng.gamma(p * b + 0.5, 1.0 / (float(np.sum(lam)) + state.omega))
        omega = rng.gamma(1.0, 1.0 / (phi + 1.0))
    else:
        phi, omega = state.phi, state.omega

    new = GibbsState(beta=beta, sigma2_inv=float(sigma2_inv), tau=tau,
                     lam=lam, phi=float(phi), omega=float(omega))
    if not (np.all(np.isfinite(beta)) and np.isfinite(sigma2_inv)
            and np.all(tau > 0) and np.all(lam > 0)):
        raise NumericalError("gibbs scan produced a non-finite or non-positive draw")
    return new


def initial_state(data: RegressionDataset, prior: PriorConfig) -> GibbsState:
    """Neutral start: beta = 0, precision 1/var(y), unit local scales."""
    var_y = float(np.var(data.y))
    return GibbsState(
        beta=np.zeros(data.p),
        sigma2_inv=1.0 / var_y if var_y > 0 else 1.0,
        tau=np.ones(data.p),
        lam=np.ones(data.p),
        phi=prior.phi_or_default(1.0),
        omega=1.0,
    )


def run_gibbs(data: RegressionDataset, prior: PriorConfig, schedule: GibbsSchedule,
              seed: Optional[int], init: Optional[GibbsState] = None):
    """Run one chain; deterministic given the seed.

    Returns the thinned chain and a FitReport whose point estimates are
    posterior means over the stored draws.
    """
    clock = Stopwatch()
    rng = np.random.default_rng(seed)
    stats = build_stats(data)
    design = (data.X, data.y) if data.p > data.n else None
    state = init if init is not None else initial_state(data, prior)

    stored = schedule.stored
    p = data.p
    chain = GibbsChain(
        beta=np.empty((stored, p)), sigma2=np.empty(stored),
        tau=np.empty((stored, p)), lam=np.empty((stored, p)),
        phi=np.empty(stored), omega=np.empty(stored),
        burn_in=schedule.burn_in, thin=schedule.thin,
        total_iterations=schedule.total, seed=seed,
    )
    k = 0
    for t in range(1, schedule.total + 1):
        try:
            state = gibbs_step(state, stats, prior, rng, design=design)
        except NumericalError as err:
            raise NumericalError(
                f"gibbs aborted at iteration {t}/{schedule.total} "
                f"({k} draws stored): {err}") from err
        if t > schedule.burn_in and (t - schedule.burn_in) % schedule.thin == 0:
            chain.beta[k] = state.beta
            chain.sigma2[k] = state.sigma2
            chain.tau[k] = state.tau
            chain.lam[k] = state.lam
            chain.phi[k] = state.phi
            chain.omega[k] = state.omega
            k += 1

    report = FitReport(
        method="gibbs",
        beta=chain.beta.mean(axis=0),
        sigma2=float(chain.sigma2.mean()),
        iterations=schedule.total,
        converged=True,
        runtime_s=clock.elapsed(),
        seed=seed,
        draws=stored,
        extra={
            "beta_sd": chain.beta.std(axis=0, ddof=1),
            "phi_mean": float(chain.phi.mean()),
        },
    )
    return chain, report
