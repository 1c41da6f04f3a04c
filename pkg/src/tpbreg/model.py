"""Shared regression data model, prior configuration and sufficient statistics.

All three inference engines and the lasso baseline consume the same
dataset container and the same precomputed cross products; none of them
ever touch the raw design matrix twice for the same quantity.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .tpb import TpbParams


@dataclass(frozen=True)
class RegressionDataset:
    """Response ``y`` (n,), design ``X`` (n, p), optional simulation truth.

    ``true_beta`` and ``design_cov`` are carried only by generated data so
    that estimation loss can be scored against the generating process.
    """

    y: np.ndarray
    X: np.ndarray
    true_beta: Optional[np.ndarray] = None
    design_cov: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"design matrix must be 2-d, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(
                f"response length {y.shape} does not match design rows {X.shape}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        if self.true_beta is not None:
            tb = np.asarray(self.true_beta, dtype=float)
            if tb.shape != (X.shape[1],):
                raise ValueError("true_beta does not conform to the design")
            object.__setattr__(self, "true_beta", tb)
        if self.design_cov is not None:
            C = np.asarray(self.design_cov, dtype=float)
            if C.shape != (X.shape[1], X.shape[1]):
                raise ValueError("design_cov does not conform to the design")
            if not np.allclose(C, C.T, atol=1e-8):
                raise ValueError("design_cov must be symmetric")
            object.__setattr__(self, "design_cov", C)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class PriorConfig:
    """TPB prior plus the error-precision gamma hyperparameters.

    ``c0 = d0 = 0`` is the improper Jeffreys default.  phi handling is
    carried by the TPB triple itself: ``tpb.phi=None`` selects the
    hierarchical route phi ~ Gamma(1/2, omega), omega ~ Gamma(1/2, 1).
    """

    tpb: TpbParams
    c0: float = 0.0
    d0: float = 0.0

    def __post_init__(self):
        if self.c0 < 0.0 or self.d0 < 0.0:
            raise ValueError("c0 and d0 must be non-negative")

    @property
    def phi_hierarchical(self) -> bool:
        return self.tpb.phi is None

    def phi_or_default(self, default: float = 1.0) -> float:
        return default if self.tpb.phi is None else self.tpb.phi


@dataclass(frozen=True)
class SufficientStats:
    """X'X, X'y and y'y, computed once per dataset."""

    xtx: np.ndarray
    xty: np.ndarray
    yty: float
    n: int

    @property
    def p(self) -> int:
        return self.xty.shape[0]


def build_stats(data: RegressionDataset) -> SufficientStats:
    """Exact cross products of a conforming dataset."""
    X, y = data.X, data.y
    return SufficientStats(xtx=X.T @ X, xty=X.T @ y, yty=float(y @ y), n=data.n)


@dataclass(frozen=True)
class StandardizationRecord:
    """Centering/scaling applied to a dataset, for back-transforming fits."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float

    def beta_to_raw(self, beta_std: np.ndarray) -> np.ndarray:
        return np.asarray(beta_std) / self.x_scale

    def intercept(self, beta_std: np.ndarray) -> float:
        return self.y_mean - float(self.x_mean @ self.beta_to_raw(beta_std))


def standardize(data: RegressionDataset):
    """Center y, center and unit-scale each column of X.

    Returns the transformed dataset and the record needed to map fitted
    coefficients back to the raw scale.  Column scales use the population
    (1/n) variance.  A zero-variance column is a usage error.
    """
    X, y = data.X, data.y
    x_mean = X.mean(axis=0)
    x_sd = X.std(axis=0)
    dead = np.nonzero(x_sd <= 0.0)[0]
    if dead.size:
        raise ValueError(f"column {dead[0]} has zero variance; cannot standardize")
    record = StandardizationRecord(x_mean=x_mean, x_scale=x_sd, y_mean=float(y.mean()))
    out = RegressionDataset(
        y=y - record.y_mean,
        X=(X - x_mean) / x_sd,
        true_beta=data.true_beta,
        design_cov=data.design_cov,
    )
    return out, record


@dataclass
class FitReport:
    """Uniform summary emitted by every engine."""

    method: str
    beta: np.ndarray
    sigma2: float
    iterations: int
    converged: bool
    runtime_s: float
    seed: Optional[int] = None
    draws: int = 0
    extra: dict = field(default_factory=dict)


class Stopwatch:
    """Wall-clock timer for FitReport bookkeeping."""

    def __init__(self):
        self._t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self._t0
