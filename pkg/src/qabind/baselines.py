"""Real-valued linear baselines without intercept: ridge (L2) and lasso (L1)."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import linalg

from . import _kernels


class Penalty(str, Enum):
    L2 = "L2"
    L1 = "L1"


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    lam: float
    penalty: Penalty
    history: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("non-finite weights")


class SingularSystemError(ValueError):
    pass


class LassoConvergenceError(RuntimeError):
    """Coordinate descent hit the sweep cap; carries the last iterate."""

    def __init__(self, weights, kkt_residual, sweeps):
        self.weights = weights
        self.kkt_residual = kkt_residual
        self.sweeps = sweeps
        super().__init__(
            f"lasso did not converge in {sweeps} sweeps (KKT residual {kkt_residual:.3g})")


def _design(data):
    return data.features.astype(np.float64), np.asarray(data.targets, dtype=np.float64)


def ridge_fit(data, lam):
    """Minimize ``||y - X w||^2 + lam ||w||^2`` via Cholesky of ``X^T X + lam I``."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X, y = _design(data)
    if lam == 0 and np.linalg.matrix_rank(X) < X.shape[1]:
        raise SingularSystemError("X^T X is singular; use lambda > 0")
    A = X.T @ X + lam * np.eye(X.shape[1])
    try:
        factor = linalg.cho_factor(A, lower=True)
        w = linalg.cho_solve(factor, X.T @ y)
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"X^T X + {lam} I is singular") from exc
    if not np.all(np.isfinite(w)):
        raise SingularSystemError(f"X^T X + {lam} I is singular")
    return LinearModel(w, float(lam), Penalty.L2)


def ridge_stationarity(data, w, lam):
    X, y = _design(data)
    return float(np.max(np.abs(2 * X.T @ (X @ w - y) + 2 * lam * w)))


def lasso_kkt_residual(data, w, lam):
    """Worst violation of the lasso optimality conditions.

    Zero coordinates need ``|2 x_j^T r| <= lam``; nonzero ones need
    ``2 x_j^T r = lam * sign(w_j)``.
    """
    X, y = _design(data)
    g = 2 * X.T @ (y - X @ w)
    zero = w == 0
    viol = np.where(zero, np.maximum(np.abs(g) - lam, 0.0), np.abs(g - lam * np.sign(w)))
    return float(viol.max()) if viol.size else 0.0


KKT_TOL = 1e-7


def lasso_fit(data, lam, tol=1e-8, max_sweeps=100_000):
    """Cyclic coordinate descent with soft-thresholding.

    The penalty is ``lam * ||w||_1`` with no ``1/(2N)`` rescaling. Stops when
    the largest coordinate change in a sweep is below ``tol``. Nearly collinear
    columns (one-hot blocks always are) can stall the iterate above that
    point, so descent then continues from there with a tighter step tolerance
    until the KKT residual is below ``KKT_TOL``. The per-sweep objective values
    are kept on ``LinearModel.history``.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    X, y = _design(data)
    gram = X.T @ X
    xty = X.T @ y
    yty = float(y @ y)
    w = np.zeros(X.shape[1])
    done, parts = 0, []
    while True:
        sweeps, converged, history = _kernels.lasso_cd(gram, xty, yty, float(lam), w, tol,
                                                       max_sweeps - done)
        parts.append(history if not parts else history[1:])
        done += sweeps
        residual = lasso_kkt_residual(data, w, lam)
        if not converged:
            raise LassoConvergenceError(w, residual, done)
        if residual < KKT_TOL or tol < 1e-15 or done >= max_sweeps:
            break
        tol /= 100.0
    return LinearModel(w, float(lam), Penalty.L1, history=np.concatenate(parts))
