"""Deterministic variational fixed-point iteration for the same model as
the Gibbs engine.

The approximating family factorizes over (beta, sigma^-2, tau, lambda,
phi, omega); each update is the exact coordinate optimum, so one cycle
is a deterministic map on the moment vector and convergence is measured
by the relative movement of (<beta>, <sigma^-2>) between cycles.

The tau updates need ratios of modified Bessel functions K_{a+1/2}/K_{a-1/2}
and K_{3/2-a}/K_{1/2-a} at argument sqrt(2 <lambda_j> <sigma^-2> <beta_j^2>);
both are formed from log-Bessel differences so coefficients collapsing to
zero cannot underflow them.  At a = 1 the ratios have elementary closed
forms, which the production path uses; the general Bessel path is kept
callable for verification.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .gig import gig_moments
from .model import FitReport, PriorConfig, RegressionDataset, Stopwatch, SufficientStats, build_stats

# floor on <sigma^-2><beta_j^2> before the Bessel-ratio moments; below it
# the small-argument asymptotics of the ratio take over automatically
_BETA_SQ_FLOOR = 1e-300


@dataclass
class VbState:
    """Full set of variational moments for one fit.

    ``cov_beta`` is the dense posterior covariance when the p x p route
    ran; the n x n route for p > n does not materialize it and leaves
    None.  ``var_beta`` (its diagonal) is always exact.
    """

    mean_beta: np.ndarray            # <beta>
    var_beta: np.ndarray             # diag V_beta
    mean_prec: float                 # <sigma^-2>
    mean_tau: np.ndarray             # <tau_j>
    mean_tau_inv: np.ndarray         # <tau_j^-1>
    mean_lambda: np.ndarray          # <lambda_j>
    mean_phi: float
    mean_omega: float
    c_star: float
    d_star: float
    cov_beta: Optional[np.ndarray] = None

    @property
    def mean_beta_sq(self) -> np.ndarray:
        """<beta_j^2> = V_jj + <beta_j>^2."""
        return self.var_beta + self.mean_beta**2


def default_init(data: RegressionDataset, prior: PriorConfig) -> VbState:
    """Neutral moments: unit local scales, data-scaled error precision."""
    p = data.p
    var_y = float(np.var(data.y))
    phi0 = prior.phi_or_default(1.0)
    return VbState(
        mean_beta=np.zeros(p),
        var_beta=np.ones(p),
        mean_prec=1.0 / var_y if var_y > 0 else 1.0,
        mean_tau=np.ones(p),
        mean_tau_inv=np.ones(p),
        mean_lambda=np.full(p, (prior.tpb.a + prior.tpb.b) / (1.0 + phi0)),
        mean_phi=phi0,
        mean_omega=0.5,
        c_star=0.5 * (data.n + p + prior.c0),
        d_star=1.0,
        cov_beta=np.eye(p),
    )


def tau_moments(a: float, mean_lambda, xi, use_shortcut: bool = True):
    """(<tau>, <tau^-1>) for the GIG posterior with index a - 1/2.

    ``xi`` is <sigma^-2><beta_j^2>, already floored by the caller.  With
    ``use_shortcut`` the a = 1 case takes the elementary half-integer-order
    form; otherwise the general log-Bessel path is used.
    """
    mean_lambda = np.asarray(mean_lambda, dtype=float)
    xi = np.asarray(xi, dtype=float)
    nu = 2.0 * mean_lambda
    if use_shortcut and a == 1.0:
        s = np.sqrt(nu * xi)
        mean_tau = np.sqrt(xi / nu) * (1.0 + 1.0 / s)
        mean_tau_inv = np.sqrt(nu / xi)
        return mean_tau, mean_tau_inv
    return gig_moments(a - 0.5, nu, xi)


def _chol(A: np.ndarray):
    scale = float(np.mean(np.diag(A)))
    jitter = 0.0
    for _ in range(8):
        try:
            return linalg.cholesky(A + jitter * np.eye(A.shape[0]), lower=True)
        except linalg.LinAlgError:
            jitter = max(jitter * 100.0, 1e-12 * max(scale, 1.0))
    raise NumericalError("variational normal update: factorization failed")


def vb_step(state: VbState, stats: SufficientStats, prior: PriorConfig,
            design=None, use_shortcut: bool = True) -> VbState:
    """One full moment cycle, in the fixed order
    beta -> sigma^-2 -> tau -> lambda -> phi -> omega.

    ``design`` optionally carries (X, y) to enable the n x n inversion
    route for p > n; both routes produce the same moments.
    """
    a, b = prior.tpb.a, prior.tpb.b
    n, p = stats.n, stats.p

    if design is None:
        A = stats.xtx + np.diag(state.mean_tau_inv)
        L = _chol(A)
        mean_beta = linalg.cho_solve((L, True), stats.xty)
        A_inv = linalg.cho_solve((L, True), np.eye(p))
        var_beta = np.diag(A_inv) / state.mean_prec
        cov_beta = A_inv / state.mean_prec
        # tr(X'X <beta beta'>) = tr(X'X A^-1)/<prec> + ||X mu||^2-equivalent
        quad_xx = float(np.sum(stats.xtx * A_inv)) / state.mean_prec \
            + float(mean_beta @ stats.xtx @ mean_beta)
    else:
        X, y = design
        tau_eff = 1.0 / state.mean_tau_inv
        M = (X * tau_eff) @ X.T + np.eye(n)
        Lm = _chol(M)
        # A^-1 X'y = T X' M^-1 y;  diag(A^-1) = tau - tau^2 * x_j' M^-1 x_j
        Minv_y = linalg.cho_solve((Lm, True), y)
        mean_beta = tau_eff * (X.T @ Minv_y)
        S = linalg.cho_solve((Lm, True), X)
        diag_A_inv = tau_eff - tau_eff**2 * np.einsum("ij,ij->j", X, S)
        var_beta = diag_A_inv / state.mean_prec
        cov_beta = None
        # tr(X A^-1 X') = n - tr(M^-1)
        tr_Minv = float(np.trace(linalg.cho_solve((Lm, True), np.eye(n))))
        Xmu = X @ mean_beta
        quad_xx = float(Xmu @ Xmu) + (n - tr_Minv) / state.mean_prec

    c_star = 0.5 * (n + p + prior.c0)
    beta_sq = var_beta + mean_beta**2
    d_star = 0.5 * (stats.yty - 2.0 * float(stats.xty @ mean_beta) + quad_xx
                    + float(beta_sq @ state.mean_tau_inv) + prior.d0)
    mean_prec = c_star / d_star

    xi = np.maximum(mean_prec * beta_sq, _BETA_SQ_FLOOR)
    mean_tau, mean_tau_inv = tau_moments(a, state.mean_lambda, xi, use_shortcut)

    mean_lambda = (a + b) / (mean_tau + state.mean_phi)

    if prior.phi_hierarchical:
        mean_phi = (p * b + 0.5) / (state.mean_omega + float(np.sum(mean_lambda)))
    else:
        mean_phi = prior.tpb.phi
    mean_omega = 1.0 / (mean_phi + 1.0)

    out = VbState(mean_beta=mean_beta, var_beta=var_beta, mean_prec=float(mean_prec),
                  mean_tau=mean_tau, mean_tau_inv=mean_tau_inv,
                  mean_lambda=mean_lambda, mean_phi=float(mean_phi),
                  mean_omega=float(mean_omega), c_star=float(c_star),
                  d_star=float(d_star), cov_beta=cov_beta)
    _check_finite(out)
    return out


def _check_finite(state: VbState):
    for name in ("mean_tau", "mean_tau_inv", "mean_lambda"):
        arr = getattr(state, name)
        bad = ~np.isfinite(arr)
        if np.any(bad):
            j = int(np.nonzero(bad)[0][0])
            raise NumericalError(f"moment {name}[{j}] became non-finite")
    if not (np.all(np.isfinite(state.mean_beta)) and np.isfinite(state.mean_prec)
            and np.isfinite(state.mean_phi)):
        raise NumericalError("a scalar variational moment became non-finite")


def run_vb(data: RegressionDataset, prior: PriorConfig,
           init: Optional[VbState] = None, tol: float = 1e-8,
           max_iter: int = 10000):
    """Iterate to a fixed point; convergence on (<beta>, <sigma^-2>) only.

    Non-convergence within ``max_iter`` is reported, not raised.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    clock = Stopwatch()
    stats = build_stats(data)
    design = (data.X, data.y) if data.p > data.n else None
    state = init if init is not None else default_init(data, prior)

    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        new = vb_step(state, stats, prior, design=design)
        delta_beta = np.max(np.abs(new.mean_beta - state.mean_beta)
                            / (1.0 + np.abs(state.mean_beta)))
        delta_prec = abs(new.mean_prec - state.mean_prec) / (1.0 + abs(state.mean_prec))
        state = new
        if max(delta_beta, delta_prec) < tol:
            converged = True
            break

    sigma2 = state.d_star / (state.c_star - 1.0) if state.c_star > 1.0 else 1.0 / state.mean_prec
    report = FitReport(
        method="vb",
        beta=state.mean_beta.copy(),
        sigma2=float(sigma2),
        iterations=it,
        converged=converged,
        runtime_s=clock.elapsed(),
        extra={"phi_mean": state.mean_phi, "mean_prec": state.mean_prec},
    )
    return state, report
