"""Least-squares helpers shared by the characteristics and econometrics modules."""

from __future__ import annotations

from typing import Sequence

import numpy as np


class EstimationError(Exception):
    """Raised when an estimator cannot produce a result for the given data."""


class RankDeficientError(EstimationError):
    def __init__(self, columns: Sequence[str], what: str = "design matrix"):
        self.columns = list(columns)
        super().__init__(f"{what} is rank deficient; collinear columns: {', '.join(self.columns)}")


def collinear_columns(X: np.ndarray, names: Sequence[str]) -> list[str]:
    """Names of columns that take part in an exact linear dependence (empty if full rank)."""
    if X.shape[1] == 0:
        return []
    _, s, vt = np.linalg.svd(X, full_matrices=False)
    tol = max(X.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0) * 1e3
    null = vt[s <= tol]
    if X.shape[0] < X.shape[1]:
        # more columns than rows: every column is part of some dependence
        return list(names)
    if null.size == 0:
        return []
    involved = np.any(np.abs(null) > 1e-8, axis=0)
    return [n for n, flag in zip(names, involved) if flag]


def ols(X: np.ndarray, y: np.ndarray, names: Sequence[str] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Least squares with an explicit rank check. Returns (coefficients, residuals)."""
    names = list(names) if names is not None else [f"x{j}" for j in range(X.shape[1])]
    if X.shape[0] < X.shape[1]:
        raise RankDeficientError(names)
    bad = collinear_columns(X, names)
    if bad:
        raise RankDeficientError(bad)
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    return beta, y - X @ beta


def zero_variance(col: np.ndarray, scale: float = 1.0) -> bool:
    return bool(np.sqrt(np.mean((col - col.mean()) ** 2)) <= 1e-12 * max(scale, 1.0))
