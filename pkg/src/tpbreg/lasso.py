"""L1-penalized least squares with k-fold cross-validation.

Objective: (1/(2n)) ||y - X beta||^2 + lambda ||beta||_1, solved by
cyclic coordinate descent with glmnet-style active-set passes and warm
starts down the penalty grid.  Fold fits run at a loose tolerance (the
cross-validation curve is insensitive at 1e-5), while the returned fit
is polished at the tight default so the KKT residual contract holds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import RegressionDataset, SufficientStats, build_stats


@dataclass
class LassoFit:
    beta: np.ndarray
    lam: float
    cv_curve: list                  # (lambda, mean held-out MSE) pairs
    folds: int
    seed: Optional[int]
    converged: bool = True


def _soft(x: float, t: float) -> float:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


def _cd_solve(xtx_n: np.ndarray, xty_n: np.ndarray, lam: float, tol: float,
              max_sweeps: int, beta0: Optional[np.ndarray] = None):
    """Cyclic coordinate descent on the normal-equation form.

    ``max_sweeps`` is a total budget shared by the full and active-set
    passes.  Returns (beta, converged).
    """
    p = xty_n.shape[0]
    beta = np.zeros(p) if beta0 is None else beta0.copy()
    diag = np.diag(xtx_n).copy()
    dead = diag <= 0.0
    diag[dead] = 1.0  # zero-variance column: coefficient stays at zero
    grad = xtx_n @ beta

    def sweep(indices) -> float:
        nonlocal grad
        worst = 0.0
        for j in indices:
            if dead[j]:
                continue
            rho = xty_n[j] - grad[j] + diag[j] * beta[j]
            new = _soft(rho, lam) / diag[j]
            delta = new - beta[j]
            if delta != 0.0:
                grad += xtx_n[:, j] * delta
                beta[j] = new
                if abs(delta) > worst:
                    worst = abs(delta)
        return worst

    budget = max_sweeps
    all_idx = range(p)
    while budget > 0:
        budget -= 1
        if sweep(all_idx) < tol:
            return beta, True
        active = np.nonzero(beta != 0.0)[0]
        while budget > 0:
            budget -= 1
            if sweep(active) < tol:
                break
    return beta, False


def lasso_cd(source, lam: float, tol: float = 1e-9, max_iter: int = 100000,
             beta0: Optional[np.ndarray] = None):
    """Coordinate descent at one lambda; ``max_iter`` counts sweeps.

    ``source`` may be a RegressionDataset or a SufficientStats.  Returns
    (beta, converged); non-convergence is flagged, not raised.
    """
    if lam < 0.0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    stats = build_stats(source) if isinstance(source, RegressionDataset) else source
    n = stats.n
    return _cd_solve(stats.xtx / n, stats.xty / n, lam, tol, max_iter, beta0)


def lambda_grid(stats: SufficientStats, n_points: int = 100,
                ratio: float = 1e-4) -> np.ndarray:
    """Log-spaced grid from lambda_max (all-zero threshold) downward."""
    lam_max = float(np.max(np.abs(stats.xty))) / stats.n
    if lam_max <= 0.0:
        lam_max = 1.0
    return np.geomspace(lam_max, ratio * lam_max, n_points)


def kkt_residual(data: RegressionDataset, beta: np.ndarray, lam: float) -> float:
    """Max violation of the stationarity conditions at beta."""
    n = data.n
    corr = data.X.T @ (data.y - data.X @ beta) / n
    resid = 0.0
    for j in range(data.p):
        if beta[j] == 0.0:
            resid = max(resid, abs(corr[j]) - lam)
        else:
            resid = max(resid, abs(corr[j] - lam * np.sign(beta[j])))
    return float(resid)


def _fold_assignment(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Deterministic shuffled round-robin fold labels."""
    labels = np.arange(n) % folds
    return labels[rng.permutation(n)]


def cv_lasso(data: RegressionDataset, folds: int = 10,
             grid: Optional[Sequence[float]] = None, seed: Optional[int] = 0,
             path_tol: float = 1e-5, path_sweeps: int = 2000,
             final_tol: float = 1e-9, final_sweeps: int = 200000) -> LassoFit:
    """k-fold cross-validated lasso; the minimum-CV lambda is selected.

    Fold assignment is a seeded permutation, so the whole procedure is
    deterministic given (data, seed).  The final fit warm-starts from the
    full-data path and is polished at ``final_tol``.
    """
    n, p = data.n, data.p
    if n < folds:
        raise ValueError(f"need at least {folds} rows for {folds}-fold CV, got {n}")
    stats = build_stats(data)
    lams = np.asarray(grid, dtype=float) if grid is not None else lambda_grid(stats)
    rng = np.random.default_rng(seed)
    labels = _fold_assignment(n, folds, rng)

    sq_err = np.zeros((folds, lams.size))
    for k in range(folds):
        test = labels == k
        train = ~test
        if not np.any(test) or not np.any(train):
            raise ValueError(f"fold {k} is degenerate")
        X_tr, y_tr = data.X[train], data.y[train]
        X_te, y_te = data.X[test], data.y[test]
        n_tr = X_tr.shape[0]
        xtx_n = X_tr.T @ X_tr / n_tr
        xty_n = X_tr.T @ y_tr / n_tr
        beta = np.zeros(p)
        for i, lam in enumerate(lams):  # warm start down the grid
            beta, _ = _cd_solve(xtx_n, xty_n, float(lam), path_tol, path_sweeps, beta0=beta)
            r = y_te - X_te @ beta
            sq_err[k, i] = float(r @ r) / r.size

    mean_err = sq_err.mean(axis=0)
    best = int(np.argmin(mean_err))

    # full-data warm-start path down to the selected lambda, then polish
    xtx_n = stats.xtx / n
    xty_n = stats.xty / n
    beta = np.zeros(p)
    for lam in lams[:best + 1]:
        beta, _ = _cd_solve(xtx_n, xty_n, float(lam), path_tol, path_sweeps, beta0=beta)
    beta_full, converged = _cd_solve(xtx_n, xty_n, float(lams[best]), final_tol,
                                     final_sweeps, beta0=beta)
    return LassoFit(
        beta=beta_full,
        lam=float(lams[best]),
        cv_curve=[(float(l), float(e)) for l, e in zip(lams, mean_err)],
        folds=folds,
        seed=seed,
        converged=converged,
    )
