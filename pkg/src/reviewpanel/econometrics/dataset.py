"""Regression-ready firm-week panel, model specifications and fit results."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
import pandas as pd

from ..linalg import EstimationError
from ..panel import WeekIndex

CONTROLS = ("ad", "bm", "rd", "roa", "size", "ivol", "gp", "turn", "beta", "illiq", "ag")
FEATURES = ("diff_neg", "diff_pos", "diff_star1", "diff_star5")
KEY = ("firm_id", "t")


class InsufficientDataError(EstimationError):
    def __init__(self, detail: str = ""):
        self.detail = detail
        super().__init__("insufficient data" + (f": {detail}" if detail else ""))


def lag_name(col: str, k: int = 1) -> str:
    return f"L{k}.{col}"


@dataclass(frozen=True)
class RegressionSpec:
    """What to estimate.

    Static specs absorb firm effects and time effects (``time_fe`` is
    ``"year"``, ``"week"`` or ``None``).  Dynamic specs add ``lags`` lags of
    the outcome and are estimated by difference GMM, so both FE flags must be
    off.  ``lag_controls`` uses week t-1 controls with the week-t regressor.
    """

    outcome: str
    regressor: str
    controls: tuple[str, ...] = CONTROLS
    firm_fe: bool = True
    time_fe: str | None = "year"
    dynamic: bool = False
    lags: int = 1
    gmm_lags: tuple[int, int] = (2, 4)
    collapse: bool = False
    se: str = "clustered"
    lag_controls: bool = False
    time_dummies: bool = False
    name: str = ""

    def __post_init__(self):
        if self.dynamic and (self.firm_fe or self.time_fe):
            raise ValueError("dynamic specifications are estimated in differences; turn firm_fe/time_fe off")
        if self.time_fe not in (None, "year", "week"):
            raise ValueError(f"time_fe must be 'year', 'week' or None, got {self.time_fe!r}")
        if self.se not in ("classical", "clustered", "robust"):
            raise ValueError(f"unknown SE policy {self.se!r}")
        if self.dynamic and (self.lags < 1 or self.gmm_lags[0] < 2 or self.gmm_lags[1] < self.gmm_lags[0]):
            raise ValueError("dynamic specs need lags >= 1 and instrument lags 2 <= lo <= hi")

    @classmethod
    def static(cls, outcome: str, regressor: str, **kw) -> "RegressionSpec":
        return cls(outcome, regressor, **kw)

    @classmethod
    def dynamic_gmm(cls, outcome: str, regressor: str, **kw) -> "RegressionSpec":
        kw.setdefault("se", "robust")
        return cls(outcome, regressor, firm_fe=False, time_fe=None, dynamic=True, **kw)

    @property
    def exog_columns(self) -> list[str]:
        ctrl = [lag_name(c) for c in self.controls] if self.lag_controls else list(self.controls)
        return [self.regressor, *ctrl]

    def with_(self, **kw) -> "RegressionSpec":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome, "regressor": self.regressor, "controls": list(self.controls),
            "firm_fe": self.firm_fe, "time_fe": self.time_fe, "dynamic": self.dynamic, "lags": self.lags,
            "gmm_lags": list(self.gmm_lags), "collapse": self.collapse, "se": self.se,
            "lag_controls": self.lag_controls, "time_dummies": self.time_dummies, "name": self.name,
        }


@dataclass
class FitResult:
    coefficients: dict[str, float]
    std_errors: dict[str, float]
    t_stats: dict[str, float]
    p_values: dict[str, float]
    n_obs: int
    n_firms: int
    spec: RegressionSpec
    ar1_pvalue: float | None = None
    ar2_pvalue: float | None = None
    dropped_columns: list[str] = field(default_factory=list)
    dropped_firms: int = 0
    n_instruments: int | None = None
    warnings: list[str] = field(default_factory=list)
    extra: dict[str, Any] = field(default_factory=dict)
    residuals: np.ndarray | None = field(default=None, repr=False)
    state: Any = field(default=None, repr=False)

    def __post_init__(self):
        for k, b in self.coefficients.items():
            se = self.std_errors.get(k, math.nan)
            self.t_stats[k] = b / se if (math.isfinite(se) and se > 0) else math.nan

    def summary_row(self, name: str) -> tuple[float, float]:
        return self.coefficients.get(name, math.nan), self.t_stats.get(name, math.nan)


class PanelDataset:
    """Immutable firm-week observation table.

    Columns ``firm_id`` and ``t`` (consecutive week ordinal) identify rows;
    ``iso_year`` / ``iso_week`` are kept for output and year effects.
    """

    def __init__(self, frame: pd.DataFrame):
        df = frame.copy()
        if "t" not in df.columns:
            df["t"] = [WeekIndex(int(y), int(w)).ordinal for y, w in zip(df["iso_year"], df["iso_week"])]
        if "iso_year" not in df.columns:
            weeks = [WeekIndex.from_ordinal(int(t)) for t in df["t"]]
            df["iso_year"] = [w.year for w in weeks]
            df["iso_week"] = [w.week for w in weeks]
        df["firm_id"] = df["firm_id"].astype(str)
        df["t"] = df["t"].astype(int)
        if df.duplicated(["firm_id", "t"]).any():
            raise ValueError("panel has duplicate (firm, week) rows")
        df = df.sort_values(["firm_id", "t"], kind="mergesort").reset_index(drop=True)
        self._df = df

    @property
    def frame(self) -> pd.DataFrame:
        return self._df.copy()

    @property
    def columns(self) -> list[str]:
        return list(self._df.columns)

    def __len__(self) -> int:
        return len(self._df)

    @property
    def n_firms(self) -> int:
        return self._df["firm_id"].nunique()

    def with_lags(self, columns: Sequence[str], k: int = 1) -> pd.DataFrame:
        """Frame plus ``L{k}.col`` columns; the lag is the same firm's week t-k (NaN if absent)."""
        df = self._df
        lagged = df[["firm_id", "t", *columns]].copy()
        lagged["t"] = lagged["t"] + k
        lagged = lagged.rename(columns={c: lag_name(c, k) for c in columns})
        return df.merge(lagged, on=["firm_id", "t"], how="left")

    def design_frame(self, spec: RegressionSpec, extra: Sequence[str] = ()) -> pd.DataFrame:
        """All columns a spec needs (lags materialized), not yet listwise-deleted."""
        needed = [spec.outcome, spec.regressor, *spec.controls, *extra]
        missing = [c for c in dict.fromkeys(needed) if c not in self._df.columns]
        if missing:
            raise KeyError(f"panel lacks columns {missing}")
        df = self.with_lags(list(spec.controls)) if spec.lag_controls else self._df.copy()
        return df

    def estimable(self, spec: RegressionSpec, extra: Sequence[str] = ()) -> pd.DataFrame:
        """Rows with no missing field among the specification's columns (listwise deletion)."""
        df = self.design_frame(spec, extra)
        cols = [spec.outcome, *spec.exog_columns, *extra]
        return df.dropna(subset=list(dict.fromkeys(cols)))

    def subset(self, mask) -> "PanelDataset":
        return PanelDataset(self._df[np.asarray(mask, dtype=bool)])

    def select_rows(self, keys: pd.DataFrame) -> "PanelDataset":
        idx = pd.MultiIndex.from_frame(keys[["firm_id", "t"]])
        mine = pd.MultiIndex.from_frame(self._df[["firm_id", "t"]])
        return PanelDataset(self._df[mine.isin(idx)])


def assemble_dataset(features: pd.DataFrame, controls: pd.DataFrame) -> PanelDataset:
    """Join review features onto the weekly control table and add the one-week-ahead return.

    ``ret_lead`` is the firm's return in the next calendar week (NaN when that
    week has no market data).
    """
    keys = ["firm_id", "iso_year", "iso_week"]
    ctrl = controls.copy()
    ctrl["firm_id"] = ctrl["firm_id"].astype(str)
    feats = features.copy()
    feats["firm_id"] = feats["firm_id"].astype(str)
    df = ctrl.merge(feats, on=keys, how="outer", sort=True)
    df["t"] = [WeekIndex(int(y), int(w)).ordinal for y, w in zip(df["iso_year"], df["iso_week"])]
    if "ret" in df.columns:
        lead = df[["firm_id", "t", "ret"]].copy()
        lead["t"] -= 1
        df = df.merge(lead.rename(columns={"ret": "ret_lead"}), on=["firm_id", "t"], how="left")
    return PanelDataset(df)
