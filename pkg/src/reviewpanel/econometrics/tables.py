"""Median-split subsamples and the table runners.

Each table is a list of cells (column label -> specification, optionally on a
median-split subsample).  Estimation failures are recorded per cell and never
abort the table.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import pandas as pd

from ..linalg import EstimationError
from .dataset import CONTROLS, FitResult, PanelDataset, RegressionSpec, lag_name
from .gmm import diff_gmm
from .static import within_fe_ols

SPLIT_VARIABLES = ("ccis", "roa", "ag", "bm", "ea", "es")


@dataclass
class SubsampleSplit:
    variable: str
    cutoff: float
    high: PanelDataset
    low: PanelDataset


def median_split(data: PanelDataset, variable: str, spec: RegressionSpec | None = None) -> SubsampleSplit:
    """Split the estimable rows at the whole-sample median of ``variable``.

    high: value > median; low: value <= median (ties go low).  Estimable rows
    are those complete for ``spec`` (if given) and for the split variable.
    """
    if variable not in data.columns:
        raise KeyError(f"panel lacks split variable {variable!r}")
    if spec is not None:
        rows = data.estimable(spec, extra=[variable])
    else:
        rows = data.frame.dropna(subset=[variable])
    values = rows[variable].to_numpy(float)
    if len(values) == 0:
        raise EstimationError(f"no estimable rows for split on {variable}")
    if np.all(values == values[0]):
        raise EstimationError(f"split variable {variable} is constant")
    cutoff = float(np.median(values))
    high = rows[values > cutoff]
    low = rows[values <= cutoff]
    return SubsampleSplit(variable, cutoff, data.select_rows(high), data.select_rows(low))


def estimate(data: PanelDataset, spec: RegressionSpec) -> FitResult:
    return diff_gmm(data, spec) if spec.dynamic else within_fe_ols(data, spec)


@dataclass
class Cell:
    label: str
    spec: RegressionSpec
    split: tuple[str, str] | None = None   # (variable, "high" | "low")
    result: FitResult | None = None
    error: str | None = None


@dataclass
class TableReport:
    name: str
    title: str
    cells: list[Cell] = field(default_factory=list)

    def cell(self, label: str) -> Cell:
        for c in self.cells:
            if c.label == label:
                return c
        raise KeyError(label)


@dataclass
class TableSettings:
    time_fe: str | None = "year"
    se: str = "clustered"
    gmm_lags: tuple[int, int] = (2, 4)
    collapse: bool = False
    time_dummies: bool = False
    controls: tuple[str, ...] = CONTROLS


def _static(outcome, regressor, s: TableSettings, **kw):
    return RegressionSpec.static(outcome, regressor, controls=s.controls, time_fe=s.time_fe, se=s.se, **kw)


def _dynamic(outcome, regressor, s: TableSettings, **kw):
    return RegressionSpec.dynamic_gmm(outcome, regressor, controls=s.controls, gmm_lags=s.gmm_lags,
                                      collapse=s.collapse, time_dummies=s.time_dummies, **kw)


def table_definitions(s: TableSettings = TableSettings()) -> dict[str, tuple[str, list[Cell]]]:
    """Cells of every table analogue, keyed by table name."""
    cnst = "diff_neg"
    defs = {
        "cnst_cpst": ("Static and dynamic models: CNST / CPST", [
            Cell("static_cnst", _static("ret_lead", "diff_neg", s)),
            Cell("dynamic_cnst", _dynamic("ret_lead", "diff_neg", s)),
            Cell("static_cpst", _static("ret_lead", "diff_pos", s)),
            Cell("dynamic_cpst", _dynamic("ret_lead", "diff_pos", s)),
        ]),
        "ost_fst": ("Static and dynamic models: OST / FST", [
            Cell("static_ost", _static("ret_lead", "diff_star1", s)),
            Cell("dynamic_ost", _dynamic("ret_lead", "diff_star1", s)),
            Cell("static_fst", _static("ret_lead", "diff_star5", s)),
            Cell("dynamic_fst", _dynamic("ret_lead", "diff_star5", s)),
        ]),
        "sentiment": ("CNST in high and low consumer-confidence periods", [
            Cell("high_ccis", _static("ret_lead", cnst, s), ("ccis", "high")),
            Cell("low_ccis", _static("ret_lead", cnst, s), ("ccis", "low")),
        ]),
        "growth_value": ("CNST with growth and value companies", [
            Cell(f"{side}_{var}", _static("ret_lead", cnst, s), (var, side))
            for var in ("roa", "ag", "bm") for side in ("high", "low")
        ]),
        "transparency": ("CNST and accounting transparency (EA / ES)", [
            Cell(f"{side}_{var}", _static("ret_lead", cnst, s), (var, side))
            for var in ("ea", "es") for side in ("high", "low")
        ]),
        "surprises": ("CNST and revenue / earnings surprises", [
            Cell("sur", _dynamic("sur", cnst, s, lag_controls=True)),
            Cell("sue", _dynamic("sue", cnst, s, lag_controls=True)),
        ]),
        "profitability": ("CNST and profitability shocks", [
            Cell("hvz", _dynamic("prof_shock_hvz", cnst, s, lag_controls=True)),
            Cell("vol", _dynamic("prof_shock_vol", cnst, s, lag_controls=True)),
        ]),
    }
    return defs


def run_cell(data: PanelDataset, cell: Cell, estimator: Callable = estimate) -> Cell:
    try:
        subset = data
        if cell.split is not None:
            var, side = cell.split
            split = median_split(data, var, cell.spec)
            subset = split.high if side == "high" else split.low
            if len(subset) == 0:
                raise EstimationError("insufficient data")
        cell.result = estimator(subset, cell.spec)
    except (EstimationError, np.linalg.LinAlgError, KeyError, ValueError) as exc:
        msg = str(exc).strip("'\"")
        cell.error = "insufficient data" if "insufficient data" in msg else msg
    return cell


def run_table(data: PanelDataset, name: str, settings: TableSettings = TableSettings()) -> TableReport:
    defs = table_definitions(settings)
    if name not in defs:
        raise KeyError(f"unknown table {name!r}; choose from {sorted(defs)}")
    title, cells = defs[name]
    report = TableReport(name, title)
    for cell in cells:
        report.cells.append(run_cell(data, cell))
    return report


def run_tables(data: PanelDataset, names: Sequence[str] | None = None,
               settings: TableSettings = TableSettings()) -> list[TableReport]:
    names = list(names) if names else list(table_definitions(settings))
    return [run_table(data, n, settings) for n in names]


# -- rendering ---------------------------------------------------------------

def stars(p: float) -> str:
    if p is None or not math.isfinite(p):
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""


def _term_order(report: TableReport) -> list[str]:
    terms: list[str] = []
    for c in report.cells:
        if c.result is None:
            continue
        for t in c.result.coefficients:
            if t != "const" and t not in terms:
                terms.append(t)
    lagged_outcomes = [t for t in terms if t.startswith("L") and "." in t and t.split(".", 1)[1] in
                       {c.spec.outcome for c in report.cells}]
    rest = [t for t in terms if t not in lagged_outcomes]
    return lagged_outcomes + rest + ["const"]


def _fmt(x: float | None, digits: int = 6) -> str:
    if x is None or not math.isfinite(x):
        return ""
    return f"{x:.{digits}g}"


def table_rows(report: TableReport) -> list[list[str]]:
    """Machine-readable rows: term / term_t pairs followed by diagnostics."""
    header = ["term"] + [c.label for c in report.cells]
    rows = [header, ["status"] + ["ok" if c.result else f"error: {c.error}" for c in report.cells]]
    for term in _term_order(report):
        rows.append([term] + [_fmt(c.result.coefficients.get(term)) if c.result else "" for c in report.cells])
        rows.append([f"{term}_t"] + [_fmt(c.result.t_stats.get(term)) if c.result else "" for c in report.cells])

    def diag(label, fn):
        rows.append([label] + [fn(c) if c.result else "" for c in report.cells])

    diag("n_obs", lambda c: str(c.result.n_obs))
    diag("n_firms", lambda c: str(c.result.n_firms))
    diag("time_fe", lambda c: c.spec.time_fe or "")
    diag("firm_fe", lambda c: "yes" if c.spec.firm_fe else "")
    diag("ar1_pvalue", lambda c: _fmt(c.result.ar1_pvalue, 4))
    diag("ar2_pvalue", lambda c: _fmt(c.result.ar2_pvalue, 4))
    diag("regressor_sd", lambda c: _fmt(c.result.extra.get("regressor_sd")))
    diag("sd_scaled_effect", lambda c: _fmt(
        c.result.coefficients.get(c.spec.regressor, math.nan) * c.result.extra.get("regressor_sd", math.nan)))
    return rows


def table_csv(report: TableReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerows(table_rows(report))
    return buf.getvalue()


def table_markdown(report: TableReport) -> str:
    labels = [c.label for c in report.cells]
    lines = [f"### {report.name}: {report.title}", "",
             "| | " + " | ".join(labels) + " |",
             "|---|" + "---|" * len(labels)]
    for term in _term_order(report):
        coef_cells, t_cells = [], []
        for c in report.cells:
            r = c.result
            if r is None or term not in r.coefficients:
                coef_cells.append("")
                t_cells.append("")
                continue
            coef_cells.append(f"{r.coefficients[term]:.4f}{stars(r.p_values.get(term, math.nan))}")
            tv = r.t_stats.get(term, math.nan)
            t_cells.append(f"({tv:.4f})" if math.isfinite(tv) else "")
        lines.append(f"| {term} | " + " | ".join(coef_cells) + " |")
        lines.append("| | " + " | ".join(t_cells) + " |")

    def diag(label, fn):
        lines.append(f"| {label} | " + " | ".join(fn(c) if c.result else "" for c in report.cells) + " |")

    diag("Number of firms", lambda c: str(c.result.n_firms))
    diag("Observations", lambda c: str(c.result.n_obs))
    diag("Time FE", lambda c:"YES" if c.spec.time_fe == "year" else ("WEEK" if c.spec.time_fe == "week" else ""))
    diag("Firm FE", lambda c: "YES" if c.spec.firm_fe else "")
    diag("AR (1) test p-value", lambda c: _fmt4(c.result.ar1_pvalue))
    diag("AR (2) test p-value", lambda c: _fmt4(c.result.ar2_pvalue))
    diag("Effect of one-sd change in regressor", lambda c: _fmt4(
        c.result.coefficients.get(c.spec.regressor, math.nan) * c.result.extra.get("regressor_sd", math.nan)))
    errors = [c for c in report.cells if c.result is None]
    if errors:
        lines.append("")
        for c in errors:
            lines.append(f"- {c.label}: {c.error}")
    lines.append("")
    lines.append("t-statistics in parentheses; * p<0.10, ** p<0.05, *** p<0.01.")
    return "\n".join(lines) + "\n"


def _fmt4(x) -> str:
    if x is None or not math.isfinite(x):
        return ""
    return f"{x:.4f}"


def spec_frame(reports: Sequence[TableReport]) -> pd.DataFrame:
    rows = []
    for rep in reports:
        for c in rep.cells:
            rows.append({"table": rep.name, "cell": c.label, **c.spec.to_dict(),
                         "split": "" if c.split is None else f"{c.split[0]}:{c.split[1]}"})
    return pd.DataFrame(rows)


__all__ = [
    "Cell", "SubsampleSplit", "TableReport", "TableSettings", "estimate", "lag_name", "median_split",
    "run_cell", "run_table", "run_tables", "table_csv", "table_definitions", "table_markdown", "table_rows",
]
