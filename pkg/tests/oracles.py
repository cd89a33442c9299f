"""Independent reference implementations used as test oracles.

Each one recomputes a quantity the slow, obvious way, without calling the
package function it checks.
"""

from __future__ import annotations

import math
import statistics

import numpy as np
import pandas as pd


# -- sentiment -------------------------------------------------------------------

def greedy_scan_oracle(text: str, positive, negative) -> tuple[int, int]:
    """Enumerate every (start, term) occurrence, then replay the longest-match walk."""
    s = text.casefold()
    terms = [(t.casefold(), "pos") for t in positive] + [(t.casefold(), "neg") for t in negative]
    starts: dict[int, list[tuple[int, str]]] = {}
    for term, pol in terms:
        i = s.find(term)
        while i != -1:
            starts.setdefault(i, []).append((len(term), pol))
            i = s.find(term, i + 1)
    nw = pw = 0
    pos = 0
    while pos < len(s):
        here = starts.get(pos)
        if not here:
            pos += 1
            continue
        length, pol = max(here)
        if pol == "neg":
            nw += 1
        else:
            pw += 1
        pos += length
    return nw, pw


# -- fixed effects ---------------------------------------------------------------

def dummy_ols(df: pd.DataFrame, y: str, xs: list[str], time_col: str | None) -> np.ndarray:
    """Slopes from OLS with explicit firm indicators and (all but one) time indicators."""
    firms = sorted(df["firm_id"].unique())
    cols = [df[x].to_numpy(float) for x in xs]
    cols += [(df["firm_id"] == f).to_numpy(float) for f in firms]
    if time_col is not None:
        periods = sorted(df[time_col].unique())
        cols += [(df[time_col] == p).to_numpy(float) for p in periods[1:]]
    X = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(X, df[y].to_numpy(float), rcond=None)
    return coef[:len(xs)]


# -- fundamentals ------------------------------------------------------------------

def _flat(sd: float, values) -> bool:
    # spread at rounding level relative to the values means an exactly constant series
    return sd <= 1e-12 * max(abs(v) for v in values)


def _present(x) -> bool:
    return x is not None and not (isinstance(x, float) and math.isnan(x))


def sur_oracle(series: dict, q: pd.Period, window=8, min_obs=4):
    """(REV_q - REV_{q-4}) / sample std of REV_k - REV_{k-4} over k = q-window .. q-1."""
    cur, prev = series.get(q), series.get(q - 4)
    if not (_present(cur) and _present(prev)):
        return None
    growth = []
    for j in range(window, 0, -1):
        k = q - j
        a, b = series.get(k), series.get(k - 4)
        if _present(a) and _present(b):
            growth.append(a - b)
    if len(growth) < max(min_obs, 2):
        return None
    sigma = statistics.stdev(growth)
    if _flat(sigma, growth):
        return None
    return (cur - prev) / sigma


def sue_oracle(series: dict, q: pd.Period, window=8, min_obs=4):
    """(E_q - E_{q-4}) / sample std of E_k over k = q-window .. q-1."""
    cur, prev = series.get(q), series.get(q - 4)
    if not (_present(cur) and _present(prev)):
        return None
    hist = [series.get(q - j) for j in range(window, 0, -1)]
    hist = [h for h in hist if _present(h)]
    if len(hist) < max(min_obs, 2):
        return None
    sigma = statistics.stdev(hist)
    if _flat(sigma, hist):
        return None
    return (cur - prev) / sigma


def ea_oracle(quarterly: dict, year: int):
    """Sum of the year's four quarterly accruals over prior year-end total assets.

    ``quarterly`` maps Period -> {"accruals": .., "total_assets": ..}.
    """
    acc = [quarterly.get(pd.Period(year=year, quarter=k, freq="Q"), {}).get("accruals") for k in (1, 2, 3, 4)]
    ta = quarterly.get(pd.Period(year=year - 1, quarter=4, freq="Q"), {}).get("total_assets")
    if not all(_present(a) for a in acc) or not _present(ta) or ta <= 0:
        return None
    return math.fsum(acc) / ta


def two_pass_std(values) -> float:
    n = len(values)
    mean = math.fsum(values) / n
    return math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))


def es_oracle(quarterly: dict, year: int):
    """Two-pass std of CFO/A(-1) over two-pass std of NI/A(-1), years y-3..y."""
    def annual(col, y):
        vals = [quarterly.get(pd.Period(year=y, quarter=k, freq="Q"), {}).get(col) for k in (1, 2, 3, 4)]
        return math.fsum(vals) if all(_present(v) for v in vals) else None

    def year_end_assets(y):
        return quarterly.get(pd.Period(year=y, quarter=4, freq="Q"), {}).get("total_assets")

    cfo_r, ni_r = [], []
    for y in range(year - 3, year + 1):
        cfo, ni, a = annual("cfo", y), annual("net_profit", y), year_end_assets(y - 1)
        if cfo is None or ni is None or not _present(a) or a <= 0:
            return None
        cfo_r.append(cfo / a)
        ni_r.append(ni / a)
    den = two_pass_std(ni_r)
    if _flat(den, ni_r):
        return None
    return two_pass_std(cfo_r) / den


def shock_oracle(coefficients: dict | None, x: dict, realized):
    if coefficients is None or not _present(realized):
        return None
    total = coefficients["const"]
    for name, c in coefficients.items():
        if name == "const":
            continue
        v = x.get(name)
        if not _present(v):
            return None
        total += c * v
    return realized - total


def normal_equations(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.linalg.solve(X.T @ X, X.T @ y)
