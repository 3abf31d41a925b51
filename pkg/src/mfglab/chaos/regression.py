"""Least-squares projection onto polynomial features for backward regressions."""
from __future__ import annotations

from itertools import combinations_with_replacement

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, qr

from ..errors import RegressionSingular


def polynomial_features(variables, degree: int) -> np.ndarray:
    """All monomials of total degree 1..degree in the given flat variables."""
    cols = []
    for d in range(1, degree + 1):
        for combo in combinations_with_replacement(range(len(variables)), d):
            c = np.ones_like(variables[0])
            for j in combo:
                c = c * variables[j]
            cols.append(c)
    if not cols:
        return np.empty((len(variables[0]) if variables else 0, 0))
    return np.column_stack(cols)


class Projector:
    """Ridge-regularized projection onto ``1`` plus the given features.

    Columns are standardized; numerically constant columns are dropped, and
    a pivoted QR factorization drops columns that are linear combinations of
    earlier ones (relative pivot below ``rank_tol``).  Such exact
    collinearities arise whenever the previous adjoint iterate is itself an
    affine function of the state statistics.
    """

    def __init__(self, features: np.ndarray, ridge: float = 1e-10, rank_tol: float = 1e-7):
        n = features.shape[0]
        if n == 0:
            raise RegressionSingular("empty regression sample")
        p = features.shape[1]
        mean = features.mean(axis=0) if p else np.empty(0)
        std = features.std(axis=0) if p else np.empty(0)
        keep = np.flatnonzero(std > 1e-12 * (1 + np.abs(mean)))
        A = (features[:, keep] - mean[keep]) / std[keep]
        if A.shape[1]:
            _, r, piv = qr(A, mode="economic", pivoting=True)
            d = np.abs(np.diag(r))
            rank = int(np.sum(d > rank_tol * d[0]))
            A = A[:, np.sort(piv[:rank])]
        self.n_dropped = p - A.shape[1]
        self._A = A
        self.n_features = A.shape[1]
        if self.n_features:
            gram = A.T @ A / n + ridge * np.eye(self.n_features)
            try:
                self._chol = cho_factor(gram)
            except LinAlgError:
                raise RegressionSingular("normal equations not positive definite") from None

    def project(self, target: np.ndarray) -> np.ndarray:
        """Fitted values of the least-squares projection of ``target``."""
        target = np.asarray(target, dtype=float)
        mean = target.mean(axis=0)
        if not self.n_features:
            return np.broadcast_to(mean, target.shape).copy()
        beta = cho_solve(self._chol, self._A.T @ (target - mean) / target.shape[0])
        return mean + self._A @ beta


def martingale_regression(features: np.ndarray, target: np.ndarray, dw: np.ndarray, dt: float,
                          ridge: float = 1e-10, rank_tol: float = 1e-7):
    """Joint one-step regression ``target ~ a(phi) + z(phi) * dw``.

    Returns the fitted conditional mean ``a``, the integrand ``z`` and the
    :class:`Projector` on ``phi`` (for projecting further quantities).
    Both coefficient functions live in the span of ``1`` and the retained
    features, so an increment that is exactly ``z(phi) dw`` plus a function
    of ``phi`` is reproduced without Monte Carlo noise in ``z``.
    """
    base = Projector(features, ridge, rank_tol)
    n = len(target)
    A = base._A
    ones = np.ones((n, 1))
    unit = (dw / np.sqrt(dt))[:, None]
    design = np.hstack([ones, A, unit * ones, unit * A])
    k = design.shape[1]
    gram = design.T @ design / n + ridge * np.eye(k)
    gram[0, 0] -= ridge  # intercept is not penalized
    try:
        chol = cho_factor(gram)
    except LinAlgError:
        raise RegressionSingular("joint normal equations not positive definite") from None
    beta = cho_solve(chol, design.T @ target / n)
    half = 1 + A.shape[1]
    basis = np.hstack([ones, A])
    a = basis @ beta[:half]
    z = basis @ beta[half:] / np.sqrt(dt)
    return a, z, base
