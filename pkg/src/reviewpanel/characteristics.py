"""Firm characteristics, cash-flow surprise measures and frequency conversion.

Daily market data feed Ivol, Beta, Illiq, Size, Turn and the weekly return.
Quarterly statements feed the accounting ratios (ROA, B/M, GP, AG, Ad, R&D),
the revenue/earnings surprises, the transparency proxies EA/ES (annual) and
the HVZ/VOL profitability shocks.  Everything lower-frequency than weekly is
expanded as a step function: a week takes the value of the period that
contains its Monday, optionally shifted by a publication lag.

Missing values are NaN (or ``None`` from scalar functions); nothing is
zero-filled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .linalg import EstimationError, RankDeficientError, collinear_columns, zero_variance
from .panel import WeekIndex, assign_week

logger = logging.getLogger(__name__)

MARKET_COLUMNS = ("date", "firm_id", "return", "volume", "tradable_cap", "turnover")
FACTOR_COLUMNS = ("date", "mkt", "smb", "hml", "umd")
FINANCIAL_COLUMNS = (
    "total_assets", "net_profit", "operating_profit", "revenue_per_share", "cfo", "accruals",
    "book_equity", "sales_expense", "operating_revenue", "rd_expense", "dividends",
    "book_value", "market_value", "pays_dividend", "pre_extraordinary_income",
)
CONTROL_COLUMNS = (
    "ret", "size", "bm", "roa", "ivol", "ag", "illiq", "beta", "gp", "turn", "ad", "rd",
    "ccis", "ea", "es", "sur", "sue", "prof_shock_hvz", "prof_shock_vol",
)
HVZ_REGRESSORS = ("va", "dd", "db", "prof")
VOL_REGRESSORS = HVZ_REGRESSORS + ("vol",)


@dataclass
class ControlSettings:
    beta_window: int = 50
    beta_min_obs: int = 30
    illiq_scale: float = 1e6
    sigma_window: int = 8
    sigma_min_obs: int = 4
    vol_window: int = 8
    vol_min_obs: int = 6
    surprise_clamp: float | None = None
    publication_lag_weeks: int = 0
    week_convention: str = "iso"


def _finite(x) -> bool:
    return x is not None and not (isinstance(x, float) and math.isnan(x))


# A dispersion this small relative to the values is floating-point residue of
# an exactly constant series (e.g. NI/A built as c * A / A), so it counts as zero.
NEGLIGIBLE_SPREAD = 1e-12


def negligible_spread(sd: float, values) -> bool:
    return sd <= NEGLIGIBLE_SPREAD * float(np.max(np.abs(values)))


def safe_ratio(num, den) -> float | None:
    if not (_finite(num) and _finite(den)) or den == 0:
        return None
    return float(num) / float(den)


# -- daily-market controls ----------------------------------------------------

def compute_ivol(returns: Sequence[float], factors: np.ndarray) -> float | None:
    """Sample std of residuals from regressing returns on (1, mkt, smb, hml)."""
    r = np.asarray(returns, dtype=float)
    F = np.asarray(factors, dtype=float).reshape(len(r), -1)[:, :3]
    ok = np.isfinite(r) & np.all(np.isfinite(F), axis=1)
    r, F = r[ok], F[ok]
    if len(r) < 4:
        return None
    X = np.column_stack([np.ones(len(r)), F])
    beta, *_ = np.linalg.lstsq(X, r, rcond=None)
    resid = r - X @ beta
    return float(np.std(resid, ddof=1))


def compute_beta(returns: Sequence[float], market: Sequence[float], min_obs: int = 30) -> float | None:
    """OLS slope of stock on market return over the rows where both are present."""
    r = np.asarray(returns, dtype=float)
    m = np.asarray(market, dtype=float)
    ok = np.isfinite(r) & np.isfinite(m)
    if ok.sum() < max(min_obs, 2):
        return None
    X = np.column_stack([np.ones(ok.sum()), m[ok]])
    if zero_variance(m[ok]):
        return None
    coef, *_ = np.linalg.lstsq(X, r[ok], rcond=None)
    return float(coef[1])


def compute_illiq(returns: Sequence[float], volumes: Sequence[float], scale: float = 1e6) -> float | None:
    """Amihud: mean of |r| / volume over days with positive volume, times ``scale``."""
    r = np.asarray(returns, dtype=float)
    v = np.asarray(volumes, dtype=float)
    ok = np.isfinite(r) & np.isfinite(v) & (v > 0)
    if not ok.any():
        return None
    return float(np.mean(np.abs(r[ok]) / v[ok]) * scale)


# -- accounting ratios ----------------------------------------------------------

def compute_size(tradable_cap) -> float | None:
    if not _finite(tradable_cap) or tradable_cap <= 0:
        return None
    return math.log(tradable_cap)


def compute_asset_growth(ta_q, ta_prev) -> float | None:
    ratio = safe_ratio(ta_q, ta_prev)
    return None if ratio is None else ratio - 1.0


def compute_simple_controls(quarter: Mapping[str, float], prev_quarter: Mapping[str, float] | None) -> dict:
    """Quarterly accounting controls for one firm-quarter."""
    g = quarter.get
    prev_ta = prev_quarter.get("total_assets") if prev_quarter is not None else None
    return {
        "roa": safe_ratio(g("net_profit"), g("total_assets")),
        "bm": safe_ratio(g("book_equity"), g("market_value")),
        "gp": safe_ratio(g("pre_extraordinary_income"), g("total_assets")),
        "ag": compute_asset_growth(g("total_assets"), prev_ta),
        "ad": safe_ratio(g("sales_expense"), g("operating_revenue")),
        "rd": safe_ratio(g("rd_expense"), g("operating_revenue")),
    }


# -- transparency proxies ---------------------------------------------------------

def earnings_aggressiveness(accruals, lagged_assets) -> float | None:
    if not _finite(lagged_assets) or lagged_assets <= 0:
        return None
    return safe_ratio(accruals, lagged_assets)


def earnings_smoothing(cfo: Sequence[float], ni: Sequence[float], lagged_assets: Sequence[float]) -> float | None:
    """Std of CFO/A(-1) over std of NI/A(-1) across four consecutive years."""
    cfo, ni, a = (np.asarray(v, dtype=float) for v in (cfo, ni, lagged_assets))
    if not (len(cfo) == len(ni) == len(a) == 4):
        return None
    if not (np.all(np.isfinite(cfo)) and np.all(np.isfinite(ni)) and np.all(np.isfinite(a))) or np.any(a <= 0):
        return None
    den = np.std(ni / a, ddof=1)
    if negligible_spread(den, ni / a):
        return None
    return float(np.std(cfo / a, ddof=1) / den)


def annualize(fin: pd.DataFrame) -> pd.DataFrame:
    """Per firm-year flows (sum of four quarters) and year-end total assets.

    Expects a ``quarter`` column of quarterly Periods.  Years with fewer than
    four quarters of a flow get NaN for that flow.
    """
    df = fin.copy()
    df["year"] = df["quarter"].map(lambda p: p.year)
    flows = {}
    for col in ("accruals", "cfo", "net_profit"):
        grouped = df.groupby(["firm_id", "year"])[col]
        flows[col] = grouped.sum(min_count=4).where(grouped.count() == 4)
    q4 = df[df["quarter"].map(lambda p: p.quarter) == 4].set_index(["firm_id", "year"])["total_assets"]
    out = pd.DataFrame(flows)
    out["total_assets"] = q4.reindex(out.index)
    return out


def compute_ea(annual: pd.DataFrame, firm: str, year: int) -> float | None:
    try:
        acc = annual.at[(firm, year), "accruals"]
        ta_prev = annual.at[(firm, year - 1), "total_assets"]
    except KeyError:
        return None
    return earnings_aggressiveness(acc, ta_prev)


def compute_es(annual: pd.DataFrame, firm: str, year: int) -> float | None:
    try:
        cfo = [annual.at[(firm, year - k), "cfo"] for k in (3, 2, 1, 0)]
        ni = [annual.at[(firm, year - k), "net_profit"] for k in (3, 2, 1, 0)]
        a = [annual.at[(firm, year - k - 1), "total_assets"] for k in (3, 2, 1, 0)]
    except KeyError:
        return None
    return earnings_smoothing(cfo, ni, a)


# -- cash-flow surprises ------------------------------------------------------------

def standardized_surprise(current, year_ago, sigma, clamp: float | None = None) -> float | None:
    if not (_finite(current) and _finite(year_ago) and _finite(sigma)) or sigma <= 0:
        return None
    z = (current - year_ago) / sigma
    if clamp is not None:
        z = min(max(z, -clamp), clamp)
    return float(z)


def _complete_quarters(series: pd.Series) -> pd.Series:
    if series.empty:
        return series
    idx = pd.period_range(series.index.min(), series.index.max(), freq="Q")
    return series.reindex(idx)


def _trailing_std(values: pd.Series, q: pd.Period, window: int, min_obs: int) -> float | None:
    hist = values.reindex(pd.period_range(q - window, q - 1, freq="Q")).dropna()
    if len(hist) < max(min_obs, 2):
        return None
    sd = float(np.std(hist.to_numpy(), ddof=1))
    return None if negligible_spread(sd, hist.to_numpy()) else sd


def compute_sur(rev: pd.Series, quarter: pd.Period, window: int = 8, min_obs: int = 4,
                clamp: float | None = None) -> float | None:
    """Year-over-year change in revenue per share over the std of that change.

    The std uses the ``window`` quarters before ``quarter`` (at least ``min_obs``).
    """
    rev = _complete_quarters(rev.dropna())
    if quarter not in rev.index or (quarter - 4) not in rev.index:
        return None
    growth = rev - rev.shift(4)
    sigma = _trailing_std(growth, quarter, window, min_obs)
    return standardized_surprise(rev[quarter], rev[quarter - 4], sigma, clamp)


def compute_sue(earnings: pd.Series, quarter: pd.Period, window: int = 8, min_obs: int = 4,
                clamp: float | None = None) -> float | None:
    """Year-over-year change in operating profit over the std of operating profit."""
    earnings = _complete_quarters(earnings.dropna())
    if quarter not in earnings.index or (quarter - 4) not in earnings.index:
        return None
    sigma = _trailing_std(earnings, quarter, window, min_obs)
    return standardized_surprise(earnings[quarter], earnings[quarter - 4], sigma, clamp)


# -- profitability shocks ---------------------------------------------------------------

@dataclass
class ProfitModelFit:
    quarter: pd.Period
    model: str
    coefficients: dict[str, float]
    dropped: list[str] = field(default_factory=list)
    n_firms: int = 0

    def predict(self, x: Mapping[str, float]) -> float | None:
        total = self.coefficients["const"]
        for name, coef in self.coefficients.items():
            if name == "const":
                continue
            v = x.get(name)
            if not _finite(v):
                return None
            total += coef * v
        return float(total)


def profit_regressors(fin: pd.DataFrame, vol_window: int = 8, vol_min_obs: int = 6) -> pd.DataFrame:
    """Per firm-quarter regressors of the HVZ/VOL forecasting models.

    prof = ROA, va = market value over total assets, dd = 1 for non-payers,
    db = dividends over book value, vol = trailing std of ROA (window incl. q).
    """
    rows = []
    for firm, g in fin.groupby("firm_id", sort=True):
        g = g.set_index("quarter").sort_index()
        g = g.reindex(pd.period_range(g.index.min(), g.index.max(), freq="Q"))
        ta = g["total_assets"].where(g["total_assets"] > 0)
        prof = g["net_profit"] / ta
        bv = g["book_value"].where(g["book_value"] != 0)
        vol = prof.rolling(vol_window, min_periods=vol_min_obs).std(ddof=1)
        part = pd.DataFrame({
            "firm_id": firm,
            "quarter": g.index,
            "va": (g["market_value"] / ta).to_numpy(),
            "dd": (1.0 - g["pays_dividend"].astype(float)).to_numpy(),
            "db": (g["dividends"] / bv).to_numpy(),
            "prof": prof.to_numpy(),
            "vol": vol.to_numpy(),
            "prof_next": prof.shift(-1).to_numpy(),
        })
        rows.append(part)
    if not rows:
        return pd.DataFrame(columns=["firm_id", "quarter", *VOL_REGRESSORS, "prof_next"])
    return pd.concat(rows, ignore_index=True)


def fit_profit_model(cross_section: pd.DataFrame, quarter: pd.Period, model: str = "HVZ",
                     target: str = "prof_next") -> ProfitModelFit:
    """Cross-sectional OLS of next-quarter profitability on the quarter-q regressors."""
    names = list(_model_regressors(model))
    data = cross_section[names + [target]].dropna()
    n_params = len(names) + 1
    if len(data) < n_params + 5:
        raise EstimationError(f"{model} fit for {quarter}: {len(data)} complete firms, need {n_params + 5}")
    dropped = [n for n in names if zero_variance(data[n].to_numpy())]
    kept = [n for n in names if n not in dropped]
    X = np.column_stack([np.ones(len(data))] + [data[n].to_numpy(float) for n in kept])
    bad = collinear_columns(X, ["const"] + kept)
    if bad:
        raise RankDeficientError(bad, what=f"{model} design for {quarter}")
    coef, *_ = np.linalg.lstsq(X, data[target].to_numpy(float), rcond=None)
    if dropped:
        logger.info("%s fit for %s dropped constant regressors %s", model, quarter, dropped)
    return ProfitModelFit(quarter, model, dict(zip(["const"] + kept, map(float, coef))), dropped, len(data))


def _model_regressors(model: str) -> tuple[str, ...]:
    key = model.upper()
    if key == "HVZ":
        return HVZ_REGRESSORS
    if key == "VOL":
        return VOL_REGRESSORS
    raise ValueError(f"unknown profitability model {model!r}")


def fit_all_quarters(regs: pd.DataFrame, model: str) -> dict[pd.Period, ProfitModelFit]:
    fits = {}
    for q, xs in regs.groupby("quarter", sort=True):
        try:
            fits[q] = fit_profit_model(xs, q, model)
        except EstimationError as exc:
            logger.debug("no %s coefficients for %s: %s", model, q, exc)
    return fits


def profitability_shock(fits: Mapping[pd.Period, ProfitModelFit], x_q: Mapping[str, float],
                        realized_next, quarter: pd.Period) -> float | None:
    """Shock in quarter q+1: realized profitability minus alpha(q-1) applied to x(q)."""
    fit = fits.get(quarter - 1)
    if fit is None or not _finite(realized_next):
        return None
    expected = fit.predict(x_q)
    if expected is None:
        return None
    return float(realized_next) - expected


def profitability_shocks(regs: pd.DataFrame, model: str) -> pd.DataFrame:
    """Shocks indexed by the quarter in which they are realized (q+1)."""
    fits = fit_all_quarters(regs, model)
    out = []
    for rec in regs.itertuples(index=False):
        x = {n: getattr(rec, n) for n in _model_regressors(model)}
        shock = profitability_shock(fits, x, rec.prof_next, rec.quarter)
        out.append((rec.firm_id, rec.quarter + 1, np.nan if shock is None else shock))
    return pd.DataFrame(out, columns=["firm_id", "quarter", "shock"])


# -- frequency conversion ----------------------------------------------------------------

def to_weekly(values: Mapping, weeks: Iterable[WeekIndex], lag_weeks: int = 0) -> dict[WeekIndex, float | None]:
    """Step-function expansion of period values onto weeks.

    Keys of ``values`` are pandas Periods (monthly, quarterly, annual) or
    WeekIndex.  A week takes the value of the period containing the Monday of
    the week ``lag_weeks`` earlier; weeks outside every period get ``None``.
    """
    weeks = list(weeks)
    if not values:
        return {w: None for w in weeks}
    first = next(iter(values))
    out = {}
    for w in weeks:
        src = w.shift(-lag_weeks) if lag_weeks else w
        if isinstance(first, WeekIndex):
            key = WeekIndex(*src)
        else:
            key = pd.Period(src.monday, freq=first.freq)
        v = values.get(key)
        out[w] = v if _finite(v) else None
    return out


# -- file readers ---------------------------------------------------------------------------

def _read_csv(path, required: Sequence[str], what: str) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{what} file not found: {path}")
    df = pd.read_csv(path, dtype={"firm_id": str})
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    return df


def read_market(path) -> pd.DataFrame:
    df = _read_csv(path, MARKET_COLUMNS, "market")
    df["date"] = pd.to_datetime(df["date"]).dt.date
    if (df["volume"] < 0).any():
        raise ValueError(f"{path}: negative volume")
    return df.sort_values(["firm_id", "date"], kind="mergesort").reset_index(drop=True)


def read_factors(path) -> pd.DataFrame:
    df = _read_csv(path, FACTOR_COLUMNS, "factor")
    df["date"] = pd.to_datetime(df["date"]).dt.date
    return df.sort_values("date", kind="mergesort").reset_index(drop=True)


def read_financials(path) -> tuple[pd.DataFrame, bool]:
    """Quarterly statements. Returns (frame, accruals_derived_flag)."""
    required = [c for c in FINANCIAL_COLUMNS if c != "accruals"]
    df = _read_csv(path, ["firm_id", "quarter", *required], "financials")
    df["quarter"] = df["quarter"].map(lambda s: pd.Period(str(s), freq="Q"))
    derived = "accruals" not in df.columns
    if derived:
        df["accruals"] = df["net_profit"] - df["cfo"]
        logger.warning("%s: no accruals column; using net_profit - cfo", path)
    df["pays_dividend"] = df["pays_dividend"].astype(int)
    return df.sort_values(["firm_id", "quarter"], kind="mergesort").reset_index(drop=True), derived


def read_ccis(path) -> pd.DataFrame:
    df = _read_csv(path, ("month", "ccis"), "CCIs")
    df["month"] = df["month"].map(lambda s: pd.Period(str(s), freq="M"))
    return df


# -- weekly assembly --------------------------------------------------------------------------

def weekly_market_controls(market: pd.DataFrame, factors: pd.DataFrame,
                           settings: ControlSettings = ControlSettings()) -> pd.DataFrame:
    """Weekly ret, size, turn, illiq, ivol and beta per firm."""
    cal = factors[["date", "mkt", "smb", "hml"]].reset_index(drop=True)
    cal_pos = {d: i for i, d in enumerate(cal["date"])}
    fac = cal[["mkt", "smb", "hml"]].to_numpy(float)
    out = []
    for firm, g in market.groupby("firm_id", sort=True):
        g = g[g["date"].isin(cal_pos)]
        pos = g["date"].map(cal_pos).to_numpy()
        r_full = np.full(len(cal), np.nan)
        r_full[pos] = g["return"].to_numpy(float)
        weeks = [assign_week(d, settings.week_convention) for d in g["date"]]
        g = g.assign(_week=weeks, _pos=pos)
        for week, wk in g.groupby("_week", sort=True):
            r = wk["return"].to_numpy(float)
            p = wk["_pos"].to_numpy()
            caps = wk["tradable_cap"].to_numpy(float)
            last = p.max()
            lo = max(0, last - settings.beta_window + 1)
            valid_r = r[np.isfinite(r)]
            out.append({
                "firm_id": firm,
                "iso_year": week.year,
                "iso_week": week.week,
                "ret": float(np.prod(1.0 + valid_r) - 1.0) if len(valid_r) else np.nan,
                "size": _none_nan(compute_size(caps[np.isfinite(caps)][-1]) if np.isfinite(caps).any() else None),
                "turn": float(np.nanmean(wk["turnover"].to_numpy(float))) if wk["turnover"].notna().any() else np.nan,
                "illiq": _none_nan(compute_illiq(r, wk["volume"].to_numpy(float), settings.illiq_scale)),
                "ivol": _none_nan(compute_ivol(r, fac[p])),
                "beta": _none_nan(compute_beta(r_full[lo:last + 1], fac[lo:last + 1, 0], settings.beta_min_obs)),
            })
    return pd.DataFrame(out)


def _none_nan(x):
    return np.nan if x is None else x


def quarterly_measures(fin: pd.DataFrame, settings: ControlSettings = ControlSettings()) -> pd.DataFrame:
    """Per firm-quarter accounting ratios, SUR, SUE and profitability shocks."""
    regs = profit_regressors(fin, settings.vol_window, settings.vol_min_obs)
    shocks = {
        m: profitability_shocks(regs, m).set_index(["firm_id", "quarter"])["shock"]
        for m in ("HVZ", "VOL")
    }
    rows = []
    for firm, g in fin.groupby("firm_id", sort=True):
        g = g.set_index("quarter").sort_index()
        rev = g["revenue_per_share"]
        earn = g["operating_profit"]
        records = g.to_dict("index")
        for q in g.index:
            rec = {"firm_id": firm, "quarter": q}
            rec.update(compute_simple_controls(records[q], records.get(q - 1)))
            rec["sur"] = compute_sur(rev, q, settings.sigma_window, settings.sigma_min_obs, settings.surprise_clamp)
            rec["sue"] = compute_sue(earn, q, settings.sigma_window, settings.sigma_min_obs, settings.surprise_clamp)
            rec["prof_shock_hvz"] = shocks["HVZ"].get((firm, q), np.nan)
            rec["prof_shock_vol"] = shocks["VOL"].get((firm, q), np.nan)
            rows.append(rec)
    return pd.DataFrame(rows).astype({c: float for c in ("roa", "bm", "gp", "ag", "ad", "rd", "sur", "sue")}, errors="ignore")


def annual_measures(fin: pd.DataFrame) -> pd.DataFrame:
    annual = annualize(fin)
    rows = []
    for firm, year in annual.index:
        rows.append({
            "firm_id": firm, "year": year,
            "ea": _none_nan(compute_ea(annual, firm, year)),
            "es": _none_nan(compute_es(annual, firm, year)),
        })
    return pd.DataFrame(rows, columns=["firm_id", "year", "ea", "es"])


def build_controls(market: pd.DataFrame, factors: pd.DataFrame, financials: pd.DataFrame,
                   ccis: pd.DataFrame | None, settings: ControlSettings = ControlSettings()) -> pd.DataFrame:
    """Weekly control table keyed by (firm_id, iso_year, iso_week)."""
    weekly = weekly_market_controls(market, factors, settings)
    if weekly.empty:
        return pd.DataFrame(columns=["firm_id", "iso_year", "iso_week", *CONTROL_COLUMNS])
    quarterly = quarterly_measures(financials, settings)
    annual = annual_measures(financials)
    lag = settings.publication_lag_weeks

    ccis_map = {} if ccis is None else dict(zip(ccis["month"], ccis["ccis"].astype(float)))
    q_cols = ["bm", "roa", "ag", "gp", "ad", "rd", "sur", "sue", "prof_shock_hvz", "prof_shock_vol"]
    parts = []
    for firm, g in weekly.groupby("firm_id", sort=True):
        weeks = [WeekIndex(y, w) for y, w in zip(g["iso_year"], g["iso_week"])]
        g = g.copy()
        qf = quarterly[quarterly["firm_id"] == firm].set_index("quarter") if not quarterly.empty else None
        for col in q_cols:
            src = {} if qf is None else {q: v for q, v in qf[col].items() if _finite(v)}
            g[col] = [_none_nan(v) for v in to_weekly(src, weeks, lag).values()]
        af = annual[annual["firm_id"] == firm]
        for col in ("ea", "es"):
            src = {pd.Period(year=int(y), freq="Y"): v for y, v in zip(af["year"], af[col]) if _finite(v)}
            g[col] = [_none_nan(v) for v in to_weekly(src, weeks, lag).values()]
        g["ccis"] = [_none_nan(v) for v in to_weekly(ccis_map, weeks, lag).values()]
        parts.append(g)
    out = pd.concat(parts, ignore_index=True)
    return out[["firm_id", "iso_year", "iso_week", *CONTROL_COLUMNS]].sort_values(
        ["firm_id", "iso_year", "iso_week"], kind="mergesort").reset_index(drop=True)
