"""One-step Arellano-Bond difference GMM and the AR(m) residual test.

Model in levels, per firm i and week t::

    y[i,t] = sum_j rho_j * y[i,t-j] + x[i,t]' beta + eta_i + eps[i,t]

First differencing removes eta_i.  The differenced lagged outcomes are
instrumented with levels y[i,t-s], s in [lo, hi]; with ``collapse`` one column
per lag, otherwise one column per (week, lag).  Differenced exogenous
regressors instrument themselves.  The one-step weight matrix uses the usual
tridiagonal H (2 on the diagonal, -1 between adjacent weeks); standard errors
are the one-step robust sandwich.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..linalg import EstimationError, RankDeficientError, collinear_columns
from .dataset import FitResult, InsufficientDataError, PanelDataset, RegressionSpec, lag_name

WEAK_INSTRUMENT_F = 10.0


class WeakInstrumentWarning(UserWarning):
    pass


class InstrumentCountWarning(UserWarning):
    pass


@dataclass
class _FirmBlock:
    firm: str
    t: np.ndarray        # calendar week of each differenced equation
    y: np.ndarray        # differenced outcome
    X: np.ndarray        # differenced regressors (lags first)
    Z: np.ndarray        # instruments
    levels: np.ndarray   # level outcome, level regressors for the constant
    H: np.ndarray


@dataclass
class GmmState:
    blocks: list[_FirmBlock]
    beta: np.ndarray
    A: np.ndarray        # one-step weight matrix
    M: np.ndarray        # (X'Z A Z'X)^-1
    ZX: np.ndarray       # Z'X
    V: np.ndarray        # robust covariance of beta
    resid: list[np.ndarray]


def _h_matrix(t: np.ndarray) -> np.ndarray:
    n = len(t)
    H = 2.0 * np.eye(n)
    if n > 1:
        adj = np.abs(t[:, None] - t[None, :]) == 1
        H[adj] = -1.0
    return H


def _build_blocks(data: PanelDataset, spec: RegressionSpec):
    p = spec.lags
    lo, hi = spec.gmm_lags
    exog = list(dict.fromkeys(spec.exog_columns))
    df = data.design_frame(spec)
    df = df[["firm_id", "t", spec.outcome, *[c for c in exog if c in df.columns]]]
    missing = [c for c in exog if c not in df.columns]
    if missing:
        raise KeyError(f"panel lacks columns {missing}")

    firms = []
    for firm, g in df.groupby("firm_id", sort=True):
        t0, t1 = int(g["t"].min()), int(g["t"].max())
        span = t1 - t0 + 1
        yv = np.full(span, np.nan)
        xv = np.full((span, len(exog)), np.nan)
        pos = g["t"].to_numpy() - t0
        yv[pos] = g[spec.outcome].to_numpy(float)
        xv[pos] = g[exog].to_numpy(float)
        firms.append((str(firm), t0, yv, xv))

    # equations: y_t, y_{t-1..t-p-1}, x_t, x_{t-1} observed
    eqs = []
    for firm, t0, yv, xv in firms:
        rows = []
        n_levels = int(np.isfinite(yv).sum())
        if n_levels < 4:
            continue
        for a in range(p + 1, len(yv)):
            if not np.isfinite(yv[a - p - 1:a + 1]).all():
                continue
            if not (np.isfinite(xv[a]).all() and np.isfinite(xv[a - 1]).all()):
                continue
            rows.append(a)
        if rows:
            eqs.append((firm, t0, yv, xv, np.array(rows)))
    if not eqs:
        raise InsufficientDataError("no usable differenced equations")

    eq_times = np.unique(np.concatenate([t0 + r for _, t0, _, _, r in eqs]))
    lags = list(range(lo, hi + 1))
    if spec.collapse:
        gmm_cols = {(None, s): j for j, s in enumerate(lags)}
    else:
        # one column per (week, lag) that has at least one observed instrument
        used = set()
        for firm, t0, yv, xv, rows in eqs:
            for a in rows:
                for s in lags:
                    if a - s >= 0 and np.isfinite(yv[a - s]):
                        used.add((int(t0 + a), s))
        gmm_cols = {key: j for j, key in enumerate(sorted(used))}
    n_gmm = len(gmm_cols)
    # the differenced equation has no intercept, and differenced level dummies
    # span an indicator for every equation week, so none is omitted here
    time_dummy_times = eq_times if spec.time_dummies else np.array([], dtype=int)
    td_index = {int(tt): j for j, tt in enumerate(time_dummy_times)}

    blocks = []
    for firm, t0, yv, xv, rows in eqs:
        n = len(rows)
        tt = t0 + rows
        dy = yv[rows] - yv[rows - 1]
        dylags = np.column_stack([yv[rows - j] - yv[rows - j - 1] for j in range(1, p + 1)])
        dx = xv[rows] - xv[rows - 1]
        D = np.zeros((n, len(td_index)))
        for r, tv in enumerate(tt):
            j = td_index.get(int(tv))
            if j is not None:
                D[r, j] = 1.0
        X = np.column_stack([dylags, dx, D])
        Zg = np.zeros((n, n_gmm))
        for r, a in enumerate(rows):
            for s in lags:
                if a - s >= 0 and np.isfinite(yv[a - s]):
                    key = (None, s) if spec.collapse else (int(t0 + a), s)
                    Zg[r, gmm_cols[key]] = yv[a - s]
        Z = np.column_stack([Zg, dx, D])
        lev_lags = np.column_stack([yv[rows - j] for j in range(1, p + 1)])
        levels = np.column_stack([yv[rows], lev_lags, xv[rows]])
        blocks.append(_FirmBlock(firm, tt, dy, X, Z, levels, _h_matrix(tt)))
    names = [lag_name(spec.outcome, j) for j in range(1, p + 1)] + exog + [f"week_{int(t)}" for t in time_dummy_times]
    return blocks, names, n_gmm


def _drop_static_regressors(blocks: list[_FirmBlock], names: list[str], n_gmm: int,
                            spec: RegressionSpec) -> list[str]:
    """Remove exogenous regressors whose first differences are zero everywhere.

    Such a column (for example a characteristic that never changes within a
    firm) is wiped out by differencing, like a firm effect.  It is removed from
    X, from its own instrument column and from the level data; ``names`` is
    edited in place and the dropped names are returned.
    """
    p = spec.lags
    n_exog = len(dict.fromkeys(spec.exog_columns))
    X = np.vstack([b.X for b in blocks])
    dead = []
    for j in range(p, p + n_exog):
        col = X[:, j]
        scale = max(float(np.abs(np.concatenate([b.levels[:, 1 + j] for b in blocks])).max(initial=0.0)), 1.0)
        if np.all(np.abs(col) <= 1e-12 * scale):
            dead.append(j)
    if not dead:
        return []
    keep_x = [j for j in range(X.shape[1]) if j not in dead]
    keep_z = [j for j in range(blocks[0].Z.shape[1]) if j - n_gmm + p not in dead or j < n_gmm]
    keep_l = [j for j in range(blocks[0].levels.shape[1]) if j - 1 not in dead or j == 0]
    for b in blocks:
        b.X, b.Z, b.levels = b.X[:, keep_x], b.Z[:, keep_z], b.levels[:, keep_l]
    dropped = [names[j] for j in dead]
    names[:] = [names[j] for j in keep_x]
    return dropped


def _first_stage_f(blocks: list[_FirmBlock], n_gmm: int, p: int) -> float:
    """F statistic of the level instruments in the regression of the first differenced lag on all instruments."""
    X = np.vstack([b.X for b in blocks])
    Z = np.vstack([b.Z for b in blocks])
    target = X[:, 0]
    Zin = Z[:, n_gmm:]
    n = len(target)

    def rss(M):
        if M.shape[1] == 0:
            return float(target @ target)
        coef, *_ = np.linalg.lstsq(M, target, rcond=None)
        r = target - M @ coef
        return float(r @ r)

    rank_full = np.linalg.matrix_rank(Z)
    q = rank_full - (np.linalg.matrix_rank(Zin) if Zin.shape[1] else 0)
    df_resid = n - rank_full
    if q <= 0 or df_resid <= 0:
        return math.nan
    r_full, r_restr = rss(Z), rss(Zin)
    if r_full <= 0:
        return math.inf
    return ((r_restr - r_full) / q) / (r_full / df_resid)


def diff_gmm(data: PanelDataset, spec: RegressionSpec) -> FitResult:
    if not spec.dynamic:
        raise ValueError("diff_gmm estimates dynamic specifications only")
    blocks, names, n_gmm = _build_blocks(data, spec)
    dropped = _drop_static_regressors(blocks, names, n_gmm, spec)
    k = len(names)
    X = np.vstack([b.X for b in blocks])
    Z = np.vstack([b.Z for b in blocks])
    y = np.concatenate([b.y for b in blocks])
    n_obs, n_instr = Z.shape
    n_firms = len(blocks)
    notes = []

    if n_obs <= k:
        raise InsufficientDataError(f"{n_obs} differenced equations for {k} parameters")
    zero_cols = np.all(Z == 0, axis=0)
    if zero_cols.any():
        keep = ~zero_cols
        for b in blocks:
            b.Z = b.Z[:, keep]
        n_gmm -= int(zero_cols[:n_gmm].sum())
        Z = Z[:, keep]
        n_instr = Z.shape[1]
    if np.linalg.matrix_rank(Z) < n_instr:
        raise EstimationError("instrument matrix is rank deficient")
    bad = collinear_columns(X, names)
    if bad:
        raise RankDeficientError(bad)
    if n_instr < k:
        raise EstimationError(f"underidentified: {n_instr} instruments for {k} parameters")
    if n_instr >= n_firms:
        msg = f"{n_instr} instruments for {n_firms} firms; consider collapse=True"
        warnings.warn(msg, InstrumentCountWarning, stacklevel=2)
        notes.append(msg)

    ZHZ = sum(b.Z.T @ b.H @ b.Z for b in blocks)
    A = np.linalg.pinv(ZHZ)
    ZX = Z.T @ X
    Zy = Z.T @ y
    XZA = ZX.T @ A
    G = XZA @ ZX
    if np.linalg.matrix_rank(G) < k:
        raise RankDeficientError(names, what="GMM normal matrix")
    M = np.linalg.inv(G)
    beta = M @ (XZA @ Zy)

    resid = [b.y - b.X @ beta for b in blocks]
    S = np.zeros((n_instr, n_instr))
    for b, u in zip(blocks, resid):
        zu = b.Z.T @ u
        S += np.outer(zu, zu)
    if spec.se == "classical":
        # one-step homoskedastic: sigma^2_eps * M, with sigma^2 from differenced residuals / 2
        u_all = np.concatenate(resid)
        V = (u_all @ u_all / (2.0 * (n_obs - k))) * M
    else:
        V = M @ (XZA @ S @ XZA.T) @ M
    se = np.sqrt(np.maximum(np.diag(V), 0.0))

    f_stat = _first_stage_f(blocks, n_gmm, spec.lags)
    if math.isfinite(f_stat) and f_stat < WEAK_INSTRUMENT_F:
        msg = f"weak instruments: first-stage F = {f_stat:.2f} < {WEAK_INSTRUMENT_F:g}"
        warnings.warn(msg, WeakInstrumentWarning, stacklevel=2)
        notes.append(msg)

    state = GmmState(blocks, beta, A, M, ZX, V, resid)
    coefs = dict(zip(names, map(float, beta)))
    ses = dict(zip(names, map(float, se)))
    pvals = {n: float(2 * stats.norm.sf(abs(coefs[n] / ses[n]))) if ses[n] > 0 else math.nan for n in names}

    # level intercept: mean of y - lags*rho - x*beta over the estimation sample
    p = spec.lags
    level_resid = []
    for b in blocks:
        lev = b.levels
        fitted = lev[:, 1:1 + p] @ beta[:p] + lev[:, 1 + p:] @ beta[p:p + lev.shape[1] - 1 - p]
        level_resid.append(lev[:, 0] - fitted)
    coefs["const"] = float(np.mean(np.concatenate(level_resid)))
    ses["const"] = math.nan
    pvals["const"] = math.nan

    reg_vals = np.concatenate([b.levels[:, 1 + p] for b in blocks])
    fit = FitResult(
        coefficients=coefs, std_errors=ses, t_stats={}, p_values=pvals,
        n_obs=n_obs, n_firms=n_firms, spec=spec, n_instruments=n_instr, warnings=notes, dropped_columns=dropped,
        extra={"first_stage_f": f_stat, "regressor_sd": float(np.std(reg_vals, ddof=1)) if len(reg_vals) > 1 else math.nan},
        residuals=np.concatenate(resid), state=state,
    )
    fit.ar1_pvalue = ar_test(fit, 1)
    fit.ar2_pvalue = ar_test(fit, 2)
    return fit


def ar_statistic(state: GmmState, m: int) -> float | None:
    """Arellano-Bond m-statistic for order-m autocorrelation in differenced residuals."""
    num = 0.0
    sum_w_u_sq = 0.0
    wX = np.zeros(state.beta.shape[0])
    Zuuw = np.zeros(state.A.shape[0])
    pairs = 0
    for b, u in zip(state.blocks, state.resid):
        pos = {int(t): j for j, t in enumerate(b.t)}
        w = np.zeros(len(u))
        mask = np.zeros(len(u), dtype=bool)
        for j, t in enumerate(b.t):
            src = pos.get(int(t) - m)
            if src is not None:
                w[j] = u[src]
                mask[j] = True
        if not mask.any():
            continue
        pairs += int(mask.sum())
        u_star = np.where(mask, u, 0.0)
        wu = float(w @ u_star)
        num += wu
        sum_w_u_sq += wu * wu
        wX += w @ b.X
        Zuuw += (b.Z.T @ u) * wu
    if pairs == 0:
        return None
    var = sum_w_u_sq - 2.0 * wX @ state.M @ (state.ZX.T @ state.A @ Zuuw) + wX @ state.V @ wX
    if not var > 0:
        return None
    return float(num / math.sqrt(var))


def ar_test(fit: FitResult, m: int) -> float | None:
    """Two-sided normal p-value of the AR(m) test; None when no residual pairs m weeks apart exist."""
    if fit.state is None:
        raise ValueError("AR test needs a difference-GMM fit")
    z = ar_statistic(fit.state, m)
    if z is None:
        return None
    return float(2 * stats.norm.sf(abs(z)))
