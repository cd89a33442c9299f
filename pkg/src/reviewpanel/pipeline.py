"""Pipeline stages behind the CLI subcommands.

Each stage reads its inputs from the config (or from the previous stage's
files in ``out_dir``), writes its outputs and a ``run_<stage>.json`` manifest
with the config digest, input/output SHA-256 digests and library versions.
No timestamps are written, so identical inputs and config give identical
bytes.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
import platform
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .characteristics import (
    ControlSettings, build_controls, read_ccis, read_factors, read_financials, read_market,
)
from .config import RunConfig
from .econometrics.dataset import CONTROLS, PanelDataset, RegressionSpec, assemble_dataset
from .econometrics.tables import (
    Cell, TableReport, TableSettings, estimate, run_cell, run_tables, table_csv, table_definitions,
    table_markdown,
)
from .ingest import IngestReport, ingest, read_store, summarize, write_store
from .panel import build_review_features, filter_eligible, fmt_value, read_panel_csv, write_panel_csv
from .sentiment import load_demo_lexicon, load_lexicon
from .synth import BundleSpec, DgpSpec, ReviewSpec, gen_bundle, run_monte_carlo

logger = logging.getLogger(__name__)


class MissingInputError(FileNotFoundError):
    pass


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(path: Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"{what} not found: {path}")
    return path


def _versions() -> dict:
    return {
        "reviewpanel": __version__, "python": platform.python_version(),
        "numpy": np.__version__, "pandas": pd.__version__, "scipy": scipy.__version__,
    }


def write_manifest(cfg: RunConfig, stage: str, inputs: list[Path], outputs: list[Path]) -> Path:
    out = Path(cfg.out_dir)
    files = []
    for p in outputs:
        p = Path(p)
        if p.is_dir():
            files.extend(sorted(q for q in p.rglob("*") if q.is_file()))
        else:
            files.append(p)

    def rel(p: Path) -> str:
        try:
            return str(p.resolve().relative_to(out.resolve()))
        except ValueError:
            return str(p)

    manifest = {
        "stage": stage,
        "config_digest": cfg.digest(),
        "config": cfg.to_dict(),
        "inputs": {str(p): sha256_file(p) for p in inputs if Path(p).is_file()},
        "outputs": {rel(p): sha256_file(p) for p in files},
        "versions": _versions(),
    }
    path = out / f"run_{stage}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "config.cfg").write_text(cfg.to_text(), encoding="utf-8")
    return path


def _out(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- stages --------------------------------------------------------------------------------

def stage_ingest(cfg: RunConfig) -> IngestReport:
    dumps = cfg.dump_paths
    if not dumps:
        raise MissingInputError("review dump not configured (set dumps = path[,path...])")
    for p in dumps:
        _require(p, "review dump")
    window = (dt.date.fromisoformat(cfg.window_start), dt.date.fromisoformat(cfg.window_end))
    records, report = ingest(dumps, cfg.dump_format, window)
    out = _out(cfg)
    write_store(records, out, report)
    logger.info("ingest: read %d, kept %d, duplicates %d, invalid %d", report.records_read,
                report.records_kept, report.duplicates_dropped, report.invalid_dropped)
    write_manifest(cfg, "ingest", dumps, [out / "store", out / "ingest_report.json"])
    return report


def _store(cfg: RunConfig):
    store = _require(Path(cfg.out_dir) / "store", "review store (run ingest first)")
    return read_store(store)


def _read_sectors(path: str) -> dict[str, str] | None:
    if not path:
        return None
    with _require(Path(path), "sector file").open(newline="", encoding="utf-8") as fh:
        return {r["firm_id"]: r["sector"] for r in csv.DictReader(fh)}


def stage_summary(cfg: RunConfig) -> list[dict]:
    records = _store(cfg)
    sectors = _read_sectors(cfg.sectors)
    rows = summarize(records, sectors)
    out = _out(cfg)
    with (out / "summary.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["group", "n_reviews", "n_products", "n_firms"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    lines = ["| Group | Reviews | Products | Firms |", "|---|---:|---:|---:|"]
    lines += [f"| {r['group']} | {r['n_reviews']} | {r['n_products']} | {r['n_firms']} |" for r in rows]
    (out / "summary.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    inputs = [Path(cfg.sectors)] if cfg.sectors else []
    write_manifest(cfg, "summary", inputs, [out / "summary.csv", out / "summary.md"])
    return rows


def _lexicon(cfg: RunConfig):
    if cfg.lexicon_pos or cfg.lexicon_neg:
        return load_lexicon(cfg.lexicon_pos, cfg.lexicon_neg)
    logger.warning("no lexicon configured; using the bundled demonstration lexicon")
    return load_demo_lexicon()


def stage_features(cfg: RunConfig):
    records = _store(cfg)
    lexicon = _lexicon(cfg)
    rows = build_review_features(records, lexicon, cfg.week_convention, cfg.accumulation_weeks)
    elig = filter_eligible(rows, records, cfg.min_reviews, cfg.min_span_days)
    for firm, reason in sorted(elig.reasons.items()):
        logger.info("firm %s excluded (%s)", firm, reason)
    kept = [r for r in rows if r.firm_id in elig.eligible_firms]
    out = _out(cfg)
    write_panel_csv(kept, out / "features.csv")
    (out / "eligibility.json").write_text(json.dumps(elig.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    inputs = [Path(p) for p in (cfg.lexicon_pos, cfg.lexicon_neg) if p]
    write_manifest(cfg, "features", inputs, [out / "features.csv", out / "eligibility.json"])
    return kept, elig


def control_settings(cfg: RunConfig) -> ControlSettings:
    return ControlSettings(
        beta_window=cfg.beta_window, beta_min_obs=cfg.beta_min_obs, illiq_scale=cfg.illiq_scale,
        sigma_window=cfg.sigma_window, sigma_min_obs=cfg.sigma_min_obs, vol_window=cfg.vol_window,
        vol_min_obs=cfg.vol_min_obs, surprise_clamp=cfg.surprise_clamp,
        publication_lag_weeks=cfg.publication_lag_weeks, week_convention=cfg.week_convention,
    )


def features_frame(rows) -> pd.DataFrame:
    recs = []
    for r in rows:
        recs.append({
            "firm_id": r.firm_id, "iso_year": r.week.year, "iso_week": r.week.week,
            "n_reviews": r.n_reviews, "n_neg": r.n_neg, "n_pos": r.n_pos,
            **{f"star{s}": r.star_counts[s] for s in range(1, 6)},
            **{k: np.nan if getattr(r, k) is None else float(getattr(r, k))
               for k in ("diff_neg", "diff_pos", "diff_star1", "diff_star5")},
        })
    return pd.DataFrame(recs)


def write_frame(df: pd.DataFrame, path: Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(df.columns)
        for row in df.itertuples(index=False):
            w.writerow([fmt_value(v.item() if isinstance(v, np.generic) else v) for v in row])


def read_panel(path: Path) -> PanelDataset:
    path = _require(path, "panel file")
    return PanelDataset(pd.read_csv(path, dtype={"firm_id": str}))


def stage_panel(cfg: RunConfig) -> PanelDataset:
    out = Path(cfg.out_dir)
    feats_path = _require(out / "features.csv", "features file (run features first)")
    for key in ("market", "factors", "financials"):
        if not getattr(cfg, key):
            raise MissingInputError(f"{key} file not configured")
    market = read_market(_require(Path(cfg.market), "market file"))
    factors = read_factors(_require(Path(cfg.factors), "factor file"))
    financials, derived = read_financials(_require(Path(cfg.financials), "financials file"))
    ccis = read_ccis(_require(Path(cfg.ccis), "CCIs file")) if cfg.ccis else None

    features = features_frame(read_panel_csv(feats_path))
    firms = set(features["firm_id"])
    market = market[market["firm_id"].isin(firms)]
    financials = financials[financials["firm_id"].isin(firms)]
    controls = build_controls(market, factors, financials, ccis, control_settings(cfg))
    data = assemble_dataset(features, controls)

    _out(cfg)
    write_frame(controls, out / "controls.csv")
    frame = data.frame
    lead = ["firm_id", "t", "iso_year", "iso_week"]
    frame = frame[lead + [c for c in frame.columns if c not in lead]]
    write_frame(frame, out / "panel.csv")
    inputs = [Path(p) for p in (cfg.market, cfg.factors, cfg.financials, cfg.ccis) if p] + [feats_path]
    write_manifest(cfg, "panel", inputs, [out / "controls.csv", out / "panel.csv"])
    if derived:
        logger.warning("accruals were derived as net_profit - cfo")
    return data


def table_settings(cfg: RunConfig) -> TableSettings:
    return TableSettings(time_fe=cfg.time_fe_value, se=cfg.se, gmm_lags=(cfg.gmm_lag_min, cfg.gmm_lag_max),
                         collapse=cfg.collapse, time_dummies=cfg.time_dummies, controls=CONTROLS)


def regression_spec(cfg: RunConfig) -> RegressionSpec:
    if cfg.model == "dynamic":
        return RegressionSpec.dynamic_gmm(
            cfg.outcome, cfg.regressor, gmm_lags=(cfg.gmm_lag_min, cfg.gmm_lag_max), collapse=cfg.collapse,
            time_dummies=cfg.time_dummies, lag_controls=cfg.lag_controls,
            se="robust" if cfg.se == "clustered" else cfg.se,
        )
    return RegressionSpec.static(cfg.outcome, cfg.regressor, time_fe=cfg.time_fe_value, se=cfg.se,
                                 lag_controls=cfg.lag_controls)


def _quiet(fn, *args):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = fn(*args)
    for w in caught:
        logger.warning("%s", w.message)
    return result


def stage_regress(cfg: RunConfig) -> TableReport:
    out = Path(cfg.out_dir)
    data = read_panel(out / "panel.csv")
    spec = regression_spec(cfg)
    cell = _quiet(run_cell, data, Cell(f"{cfg.model}_{cfg.regressor}", spec), estimate)
    report = TableReport("regression", f"{cfg.outcome} on {cfg.regressor} ({cfg.model})", [cell])
    (out / "regression.csv").write_text(table_csv(report), encoding="utf-8")
    (out / "regression.md").write_text(table_markdown(report), encoding="utf-8")
    write_manifest(cfg, "regress", [out / "panel.csv"], [out / "regression.csv", out / "regression.md"])
    return report


def stage_tables(cfg: RunConfig) -> list[TableReport]:
    out = Path(cfg.out_dir)
    data = read_panel(out / "panel.csv")
    settings = table_settings(cfg)
    names = None if cfg.tables == "all" else [n.strip() for n in cfg.tables.split(",") if n.strip()]
    unknown = sorted(set(names or ()) - set(table_definitions(settings)))
    if unknown:
        raise ValueError(f"unknown table(s) {unknown}; choose from {sorted(table_definitions(settings))}")
    reports = _quiet(run_tables, data, names, settings)
    tdir = out / "tables"
    tdir.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        (tdir / f"{rep.name}.csv").write_text(table_csv(rep), encoding="utf-8")
    (tdir / "report.md").write_text("\n".join(table_markdown(r) for r in reports), encoding="utf-8")
    write_manifest(cfg, "tables", [out / "panel.csv"], [tdir])
    return reports


def stage_synth(cfg: RunConfig) -> dict:
    out = _out(cfg)
    spec = BundleSpec(
        reviews=ReviewSpec(n_firms=cfg.synth_firms, n_weeks=cfg.synth_weeks, weekly_rate=cfg.synth_rate,
                           n_duplicates=cfg.synth_duplicates, n_invalid=cfg.synth_invalid, seed=cfg.seed),
        cnst_effect=cfg.cnst_effect, seed=cfg.seed,
    )
    bundle = out / "bundle"
    manifest = gen_bundle(spec, bundle)
    write_manifest(cfg, "synth", [], [bundle])
    return manifest


def stage_mc(cfg: RunConfig) -> dict:
    out = _out(cfg)
    dgp = DgpSpec(n_firms=cfg.mc_firms, n_weeks=cfg.mc_weeks, rho=cfg.mc_rho, beta=cfg.mc_beta,
                  noise_ar=(0.0, cfg.mc_noise_ar2), seed=cfg.seed)
    kw = {"collapse": cfg.mc_collapse} if cfg.mc_estimator == "gmm" else {}
    summary = run_monte_carlo(cfg.mc_estimator, dgp, cfg.mc_reps, workers=cfg.workers, **kw)
    result = summary.to_dict()
    path = out / f"mc_{cfg.mc_estimator}.json"
    path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(cfg, "mc", [], [path])
    return result
