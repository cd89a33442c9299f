"""Two-way fixed-effects (within) estimator with classical or firm-clustered SEs."""

from __future__ import annotations

import math

import numpy as np
import pandas as pd
from scipy import stats

from ..linalg import EstimationError, RankDeficientError, collinear_columns
from .dataset import FitResult, InsufficientDataError, PanelDataset, RegressionSpec


def _group_demean(A: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    sums = np.zeros((n_groups, A.shape[1]))
    np.add.at(sums, codes, A)
    return A - (sums / counts[:, None])[codes]


def absorb_effects(A: np.ndarray, firm_codes: np.ndarray | None, time_codes: np.ndarray | None) -> np.ndarray:
    """Residualize the columns of ``A`` on firm and/or time indicators.

    Firm means are swept out directly; time indicators are then partialled out
    of the firm-demeaned data (exact on unbalanced panels).  With no effects the
    grand mean is removed.  Output columns always have zero mean.
    """
    A = np.asarray(A, dtype=float)
    if firm_codes is None and time_codes is None:
        return A - A.mean(axis=0)
    if firm_codes is not None:
        A = _group_demean(A, firm_codes, int(firm_codes.max()) + 1)
        if time_codes is None:
            return A
        n_t = int(time_codes.max()) + 1
        if n_t < 2:
            return A
        D = np.zeros((len(time_codes), n_t - 1))
        rows = np.nonzero(time_codes > 0)[0]
        D[rows, time_codes[rows] - 1] = 1.0
        D = _group_demean(D, firm_codes, int(firm_codes.max()) + 1)
        coef, *_ = np.linalg.lstsq(D, A, rcond=None)
        return A - D @ coef
    return _group_demean(A, time_codes, int(time_codes.max()) + 1)


def within_transform(df: pd.DataFrame, columns: list[str], spec: RegressionSpec) -> np.ndarray:
    firm_codes = pd.factorize(df["firm_id"], sort=True)[0] if spec.firm_fe else None
    time_codes = None
    if spec.time_fe == "year":
        time_codes = pd.factorize(df["iso_year"], sort=True)[0]
    elif spec.time_fe == "week":
        time_codes = pd.factorize(df["t"], sort=True)[0]
    return absorb_effects(df[columns].to_numpy(float), firm_codes, time_codes)


def cluster_covariance(X: np.ndarray, resid: np.ndarray, groups: np.ndarray) -> np.ndarray:
    """Firm-clustered sandwich with the G/(G-1) * (n-1)/(n-k) small-sample factor."""
    codes, uniq = pd.factorize(groups, sort=True)
    G = len(uniq)
    if G < 2:
        raise EstimationError(f"clustered standard errors need at least 2 clusters, got {G}")
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    scores = np.zeros((G, k))
    np.add.at(scores, codes, X * resid[:, None])
    meat = scores.T @ scores
    factor = G / (G - 1) * (n - 1) / (n - k)
    return factor * bread @ meat @ bread


def clustered_se(X: np.ndarray, resid: np.ndarray, groups) -> np.ndarray:
    return np.sqrt(np.diag(cluster_covariance(np.asarray(X, float), np.asarray(resid, float), np.asarray(groups))))


def within_fe_ols(data: PanelDataset, spec: RegressionSpec) -> FitResult:
    if spec.dynamic:
        raise ValueError("within_fe_ols estimates static specifications only")
    df = data.estimable(spec)
    counts = df.groupby("firm_id")["t"].transform("size")
    singletons = int(df.loc[counts < 2, "firm_id"].nunique()) if spec.firm_fe else 0
    if spec.firm_fe:
        df = df[counts >= 2]
    names = list(dict.fromkeys(spec.exog_columns))
    if len(df) == 0:
        raise InsufficientDataError("no complete observations")

    raw = df[[spec.outcome, *names]].to_numpy(float)
    transformed = within_transform(df, [spec.outcome, *names], spec)
    y_t, X_t = transformed[:, 0], transformed[:, 1:]
    means = raw.mean(axis=0)

    scale = np.maximum(np.abs(raw[:, 1:]).max(axis=0), 1.0) if len(raw) else np.ones(len(names))
    norms = np.sqrt(np.mean(X_t ** 2, axis=0))
    dropped = [n for n, s, sc in zip(names, norms, scale) if s <= 1e-10 * sc]
    keep = [j for j, n in enumerate(names) if n not in dropped]
    kept = [names[j] for j in keep]
    X_t = X_t[:, keep]

    n = len(df)
    n_firms = int(df["firm_id"].nunique())
    k = len(kept) + 1
    # absorbed parameters: firm effects beyond the intercept, plus identified time effects
    absorbed = (n_firms - 1 if spec.firm_fe else 0) + _time_rank(df, spec)
    dof = n - k - absorbed
    if dof <= 0 or n <= k:
        raise InsufficientDataError(f"{n} observations for {k + absorbed} parameters")

    Z = np.column_stack([np.ones(n), X_t + means[1:][keep]])
    bad = collinear_columns(Z, ["const", *kept])
    if bad:
        raise RankDeficientError(bad)
    coef, *_ = np.linalg.lstsq(Z, y_t + means[0], rcond=None)
    resid = y_t + means[0] - Z @ coef

    if spec.se == "clustered":
        cov = cluster_covariance(Z, resid, df["firm_id"].to_numpy())
        dist = stats.t(df=n_firms - 1)
    else:
        s2 = resid @ resid / dof
        cov = s2 * np.linalg.inv(Z.T @ Z)
        dist = stats.t(df=dof)
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))

    labels = ["const", *kept]
    coefs = dict(zip(labels, map(float, coef)))
    ses = dict(zip(labels, map(float, se)))
    pvals = {}
    for lab in labels:
        tval = coefs[lab] / ses[lab] if ses[lab] > 0 else math.nan
        pvals[lab] = float(2 * dist.sf(abs(tval))) if math.isfinite(tval) else math.nan
    reg_sd = float(np.std(df[spec.regressor].to_numpy(float), ddof=1)) if n > 1 else math.nan
    return FitResult(
        coefficients=coefs, std_errors=ses, t_stats={}, p_values=pvals,
        n_obs=n, n_firms=n_firms, spec=spec, dropped_columns=dropped, dropped_firms=singletons,
        extra={"regressor_sd": reg_sd, "dof": dof}, residuals=resid,
    )


def _time_rank(df: pd.DataFrame, spec: RegressionSpec) -> int:
    if spec.time_fe is None:
        return 0
    col = "iso_year" if spec.time_fe == "year" else "t"
    n_t = df[col].nunique()
    if not spec.firm_fe:
        return n_t - 1
    # time dummies net of firm effects; rank of the firm-demeaned dummy block
    firm_codes = pd.factorize(df["firm_id"], sort=True)[0]
    time_codes = pd.factorize(df[col], sort=True)[0]
    if n_t < 2:
        return 0
    D = np.zeros((len(df), n_t - 1))
    rows = np.nonzero(time_codes > 0)[0]
    D[rows, time_codes[rows] - 1] = 1.0
    D = _group_demean(D, firm_codes, int(firm_codes.max()) + 1)
    return int(np.linalg.matrix_rank(D))

