"""Synthetic data with known ground truth.

* ``gen_panel_dgp`` simulates a dynamic firm-week panel with planted
  coefficients and firm/week effects.
* ``gen_reviews`` produces a review dump whose per-firm-week sentiment and star
  counts are known by construction (texts are assembled from lexicon terms).
* ``gen_bundle`` adds daily market data, factors, quarterly statements and
  monthly CCIs, so the pipeline can run end to end offline.
* ``run_monte_carlo`` repeats a DGP/estimator pair and summarizes bias, RMSE
  and rejection rates.

Randomness: numpy's PCG64 generator (``np.random.default_rng``).  Every
independent stream is seeded with an integer sequence such as
``[seed, replication]`` so results do not depend on execution order.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .econometrics.dataset import FitResult, PanelDataset, RegressionSpec, lag_name
from .econometrics.gmm import diff_gmm
from .econometrics.static import within_fe_ols
from .ingest import DUMP_FIELDS
from .panel import FirmWeekRow, WeekIndex, write_panel_csv
from .sentiment import demo_lexicon_paths, read_terms

logger = logging.getLogger(__name__)


# -- panel DGP -----------------------------------------------------------------------------

@dataclass(frozen=True)
class DgpSpec:
    """y[i,t] = rho*y[i,t-1] + beta*f[i,t] + gamma'x[i,t] + eta_i + lambda_t + eps[i,t].

    f is a mean-zero AR(1) (``feature_rho``, innovation sd ``feature_sd``).
    Controls are AR(1) around a firm-specific level correlated with eta.  The
    optional null feature has the same law as f and zero coefficient.  eps may
    follow an AR(2) with coefficients ``noise_ar``.
    """

    n_firms: int = 100
    n_weeks: int = 10
    rho: float = 0.0
    beta: float = 0.0
    gamma: tuple[float, ...] = ()
    firm_sd: float = 1.0
    time_sd: float = 0.0
    noise_sd: float = 1.0
    noise_ar: tuple[float, float] = (0.0, 0.0)
    feature_rho: float = 0.5
    feature_sd: float = 1.0
    control_rho: float = 0.5
    control_firm_loading: float = 0.5
    burn_in: int = 50
    start: tuple[int, int] = (2012, 2)
    outcome: str = "y"
    feature: str = "f"
    null_feature: str | None = "z"
    control_names: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        for name in ("firm_sd", "time_sd", "noise_sd", "feature_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.n_firms < 1 or self.n_weeks < 1 or self.burn_in < 0:
            raise ValueError("n_firms and n_weeks must be positive, burn_in non-negative")
        if self.control_names and len(self.control_names) != len(self.gamma):
            raise ValueError("control_names must match gamma in length")

    @property
    def controls(self) -> tuple[str, ...]:
        return self.control_names or tuple(f"x{k + 1}" for k in range(len(self.gamma)))

    def with_(self, **kw) -> "DgpSpec":
        return replace(self, **kw)


def _ar1(rng: np.random.Generator, shape: tuple[int, int], phi: float, sd: float) -> np.ndarray:
    e = rng.standard_normal(shape) * sd
    out = np.empty(shape)
    out[:, 0] = e[:, 0] / math.sqrt(max(1.0 - phi * phi, 1e-12)) if abs(phi) < 1 else e[:, 0]
    for t in range(1, shape[1]):
        out[:, t] = phi * out[:, t - 1] + e[:, t]
    return out


def gen_panel_dgp(spec: DgpSpec, rng: np.random.Generator | None = None) -> tuple[PanelDataset, dict]:
    """Simulate the DGP; returns the retained panel and the truth manifest."""
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    N, T, B = spec.n_firms, spec.n_weeks, spec.burn_in
    total = B + T
    eta = rng.standard_normal(N) * spec.firm_sd
    lam = rng.standard_normal(total) * spec.time_sd
    f = _ar1(rng, (N, total), spec.feature_rho, spec.feature_sd)
    xs = [spec.control_firm_loading * eta[:, None] + _ar1(rng, (N, total), spec.control_rho, 1.0)
          for _ in spec.gamma]
    z = _ar1(rng, (N, total), spec.feature_rho, spec.feature_sd) if spec.null_feature else None
    u = rng.standard_normal((N, total)) * spec.noise_sd

    eps = np.zeros((N, total))
    a1, a2 = spec.noise_ar
    for t in range(total):
        eps[:, t] = u[:, t]
        if t >= 1:
            eps[:, t] += a1 * eps[:, t - 1]
        if t >= 2:
            eps[:, t] += a2 * eps[:, t - 2]

    y = np.zeros((N, total))
    for t in range(total):
        prev = y[:, t - 1] if t else 0.0
        y[:, t] = spec.rho * prev + spec.beta * f[:, t] + eta + lam[t] + eps[:, t]
        for g, x in zip(spec.gamma, xs):
            y[:, t] += g * x[:, t]

    t0 = WeekIndex(*spec.start).ordinal
    firms = [f"F{i + 1:03d}" for i in range(N)]
    cols = {
        "firm_id": np.repeat(firms, T),
        "t": np.tile(np.arange(t0, t0 + T), N),
        spec.outcome: y[:, B:].ravel(),
        spec.feature: f[:, B:].ravel(),
    }
    if spec.null_feature:
        cols[spec.null_feature] = z[:, B:].ravel()
    for name, x in zip(spec.controls, xs):
        cols[name] = x[:, B:].ravel()
    data = PanelDataset(pd.DataFrame(cols))
    truth = {
        "rho": spec.rho,
        "beta": {spec.feature: spec.beta, **({spec.null_feature: 0.0} if spec.null_feature else {})},
        "gamma": dict(zip(spec.controls, spec.gamma)),
        "firm_effects": dict(zip(firms, map(float, eta))),
        "time_effects": {int(t0 + k): float(lam[B + k]) for k in range(T)},
        "spec": asdict(spec),
    }
    return data, truth


# -- Monte Carlo ---------------------------------------------------------------------------

ESTIMATORS = ("gmm", "fe", "fe_dynamic")


def _regressors(spec: DgpSpec) -> tuple[str, tuple[str, ...]]:
    rest = ((spec.null_feature,) if spec.null_feature else ()) + spec.controls
    return spec.feature, rest


def estimator_spec(estimator: str, dgp: DgpSpec, **kw) -> RegressionSpec:
    """Regression specification the harness fits for ``estimator`` on ``dgp`` data."""
    feature, rest = _regressors(dgp)
    if estimator == "gmm":
        return RegressionSpec.dynamic_gmm(dgp.outcome, feature, controls=rest, **kw)
    if estimator == "fe":
        return RegressionSpec.static(dgp.outcome, feature, controls=rest, time_fe="week", **kw)
    if estimator == "fe_dynamic":
        return RegressionSpec.static(dgp.outcome, lag_name(dgp.outcome), controls=(feature, *rest),
                                     time_fe="week", **kw)
    raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def fit_estimator(estimator: str, data: PanelDataset, dgp: DgpSpec, **kw) -> FitResult:
    spec = estimator_spec(estimator, dgp, **kw)
    if estimator == "gmm":
        return diff_gmm(data, spec)
    if estimator == "fe_dynamic":
        data = PanelDataset(data.with_lags([dgp.outcome]))
    return within_fe_ols(data, spec)


def _truth_map(dgp: DgpSpec) -> dict[str, float]:
    truth = {lag_name(dgp.outcome): dgp.rho, dgp.feature: dgp.beta}
    if dgp.null_feature:
        truth[dgp.null_feature] = 0.0
    truth.update(zip(dgp.controls, dgp.gamma))
    return truth


@dataclass
class MonteCarloSummary:
    estimator: str
    reps: int
    truth: dict[str, float]
    estimates: dict[str, np.ndarray]
    p_values: dict[str, np.ndarray]
    ar1_pvalues: np.ndarray
    ar2_pvalues: np.ndarray
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def n_failed(self) -> int:
        return len(self.failures)

    def mean(self, name: str) -> float:
        est = self.estimates[name]
        return float(np.nanmean(est)) if np.isfinite(est).any() else math.nan

    def bias(self, name: str) -> float:
        return self.mean(name) - self.truth[name]

    def rmse(self, name: str) -> float:
        err = self.estimates[name] - self.truth[name]
        return float(np.sqrt(np.nanmean(err ** 2))) if np.isfinite(err).any() else math.nan

    def rejection_rate(self, name: str, level: float = 0.05) -> float:
        p = self.p_values[name]
        p = p[np.isfinite(p)]
        return float(np.mean(p < level)) if len(p) else math.nan

    def ar_rejection_rate(self, m: int, level: float = 0.05) -> float:
        p = self.ar1_pvalues if m == 1 else self.ar2_pvalues
        p = p[np.isfinite(p)]
        return float(np.mean(p < level)) if len(p) else math.nan

    def to_dict(self) -> dict:
        params = {}
        for name in self.truth:
            if name not in self.estimates:
                continue
            params[name] = {
                "truth": self.truth[name], "mean": self.mean(name), "bias": self.bias(name),
                "rmse": self.rmse(name), "rejection_rate_5pct": self.rejection_rate(name),
            }
        return {
            "estimator": self.estimator, "reps": self.reps, "n_failed": self.n_failed,
            "failures": {str(k): v for k, v in sorted(self.failures.items())},
            "parameters": params,
            "ar1_rejection_rate_5pct": self.ar_rejection_rate(1),
            "ar2_rejection_rate_5pct": self.ar_rejection_rate(2),
        }


def _one_rep(args) -> tuple[int, dict | None, dict | None, float, float, str | None]:
    estimator, dgp, rep, kw = args
    rng = np.random.default_rng([dgp.seed, rep])
    try:
        data, _ = gen_panel_dgp(dgp, rng)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fit = fit_estimator(estimator, data, dgp, **kw)
    except Exception as exc:  # recorded per replication, never fatal
        return rep, None, None, math.nan, math.nan, f"{type(exc).__name__}: {exc}"
    ar1 = math.nan if fit.ar1_pvalue is None else fit.ar1_pvalue
    ar2 = math.nan if fit.ar2_pvalue is None else fit.ar2_pvalue
    return rep, fit.coefficients, fit.p_values, ar1, ar2, None


def run_monte_carlo(estimator: str, dgp: DgpSpec, reps: int, workers: int = 1, **spec_kw) -> MonteCarloSummary:
    """Simulate ``reps`` panels from ``dgp`` and fit ``estimator`` to each.

    Replication r uses the generator seeded with ``[dgp.seed, r]``; results
    are stored by replication index, so ``workers`` does not change them.
    """
    if reps < 1:
        raise ValueError("need at least one replication")
    if estimator not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")
    jobs = [(estimator, dgp, r, spec_kw) for r in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_rep, jobs, chunksize=max(1, reps // (4 * workers))))
    else:
        results = [_one_rep(j) for j in jobs]

    truth = _truth_map(dgp)
    est = {k: np.full(reps, np.nan) for k in truth}
    pv = {k: np.full(reps, np.nan) for k in truth}
    ar1 = np.full(reps, np.nan)
    ar2 = np.full(reps, np.nan)
    failures = {}
    for rep, coefs, pvals, a1, a2, err in results:
        if err is not None:
            failures[rep] = err
            continue
        for k in truth:
            if k in coefs:
                est[k][rep] = coefs[k]
                pv[k][rep] = pvals.get(k, math.nan)
        ar1[rep], ar2[rep] = a1, a2
    if failures:
        logger.warning("%d of %d replications failed", len(failures), reps)
    return MonteCarloSummary(estimator, reps, truth, est, pv, ar1, ar2, failures)


# -- review corpus -------------------------------------------------------------------------

SEPARATOR = "，"
FILLER = ("物流", "包装", "价格", "客服", "收到", "颜色", "尺寸", "送货", "the", "item", "box", "arrived")
POLARITIES = ("neg", "pos", "neutral")
# star distribution conditional on polarity (stars 1..5)
DEFAULT_STAR_PROBS = (
    (0.45, 0.25, 0.15, 0.10, 0.05),
    (0.02, 0.03, 0.10, 0.30, 0.55),
    (0.10, 0.15, 0.40, 0.20, 0.15),
)


@dataclass(frozen=True)
class ReviewSpec:
    n_firms: int = 3
    n_weeks: int = 60
    start: str = "2015-01-05"
    weekly_rate: float = 11.0
    polarity_mix: tuple[float, float, float] = (0.3, 0.5, 0.2)
    star_probs: tuple[tuple[float, ...], ...] = DEFAULT_STAR_PROBS
    n_products: int = 40
    n_reviewers: int = 2000
    n_duplicates: int = 20
    n_invalid: int = 10
    seed: int = 0

    def __post_init__(self):
        if not math.isclose(sum(self.polarity_mix), 1.0):
            raise ValueError("polarity_mix must sum to one")
        for probs in self.star_probs:
            if len(probs) != 5 or not math.isclose(sum(probs), 1.0):
                raise ValueError("each star distribution needs five probabilities summing to one")

    @property
    def start_date(self) -> dt.date:
        return dt.date.fromisoformat(self.start)

    def firm_ids(self) -> list[str]:
        return [f"F{i + 1:02d}" for i in range(self.n_firms)]


@dataclass
class ReviewCorpus:
    rows: list[dict]
    manifest: dict


def _term_lists(pos_path=None, neg_path=None) -> tuple[list[str], list[str]]:
    if pos_path is None or neg_path is None:
        pos_path, neg_path = demo_lexicon_paths()
    pos, neg = sorted(read_terms(pos_path)), sorted(read_terms(neg_path))
    for term in pos + neg:
        if SEPARATOR in term:
            raise ValueError(f"lexicon term {term!r} contains the generator's separator")
    folded = [t.casefold() for t in pos + neg]
    for word in FILLER:
        if any(t in word.casefold() for t in folded):
            raise ValueError(f"filler word {word!r} contains a lexicon term")
    return pos, neg


def _word_counts(rng: np.random.Generator, polarity: str) -> tuple[int, int]:
    """(negative words, positive words) for a review of the given polarity."""
    if polarity == "neutral":
        k = int(rng.integers(0, 3))
        return k, k
    strong = int(rng.integers(1, 4))
    weak = int(rng.integers(0, strong))
    return (strong, weak) if polarity == "neg" else (weak, strong)


def _compose(rng: np.random.Generator, nw: int, pw: int, pos: list[str], neg: list[str]) -> str:
    words = [neg[int(rng.integers(len(neg)))] for _ in range(nw)]
    words += [pos[int(rng.integers(len(pos)))] for _ in range(pw)]
    words += [FILLER[int(rng.integers(len(FILLER)))] for _ in range(int(rng.integers(1, 4)))]
    words = [w.upper() if w.isascii() and rng.random() < 0.2 else w for w in words]
    order = rng.permutation(len(words))
    return SEPARATOR.join(words[j] for j in order)


def gen_reviews(spec: ReviewSpec, lexicon_paths: tuple | None = None) -> ReviewCorpus:
    """Review dump rows plus a manifest of the true per-firm-week counts.

    Originals have unique (firm, product, reviewer, date) keys.  Planted
    duplicates reuse an original's key with different content and appear
    after it; planted invalid rows break one validation rule each.
    """
    pos, neg = _term_lists(*(lexicon_paths or (None, None)))
    rng = np.random.default_rng([spec.seed, 1])
    start = spec.start_date
    originals: list[dict] = []
    keys: set[tuple] = set()
    weekly: dict[tuple[str, int, int], dict] = {}
    for firm in spec.firm_ids():
        for w in range(spec.n_weeks):
            n = int(rng.poisson(spec.weekly_rate))
            for _ in range(n):
                date = start + dt.timedelta(days=7 * w + int(rng.integers(0, 7)))
                product = f"{firm}-P{int(rng.integers(spec.n_products)) + 1:03d}"
                reviewer = f"U{int(rng.integers(spec.n_reviewers)) + 1:05d}"
                while (firm, product, reviewer, date) in keys:
                    reviewer = f"U{int(rng.integers(spec.n_reviewers)) + 1:05d}"
                keys.add((firm, product, reviewer, date))
                pol = POLARITIES[int(rng.choice(3, p=spec.polarity_mix))]
                nw, pw = _word_counts(rng, pol)
                stars = int(rng.choice(5, p=spec.star_probs[POLARITIES.index(pol)])) + 1
                lag = int(rng.integers(0, 31)) if rng.random() < 0.9 else ""
                originals.append({
                    "firm_id": firm, "product_id": product, "reviewer_id": reviewer,
                    "date": date.isoformat(), "stars": stars, "text": _compose(rng, nw, pw, pos, neg),
                    "order_to_review_days": lag,
                })
                iy, iw, _ = date.isocalendar()
                cell = weekly.setdefault((firm, iy, iw), {"n_reviews": 0, "n_neg": 0, "n_pos": 0,
                                                          **{f"star{s}": 0 for s in range(1, 6)}})
                cell["n_reviews"] += 1
                cell["n_neg"] += pol == "neg"
                cell["n_pos"] += pol == "pos"
                cell[f"star{stars}"] += 1

    rows = list(originals)
    n_dup = min(spec.n_duplicates, len(originals))
    for j in sorted(rng.choice(len(originals), size=n_dup, replace=False).tolist(), reverse=True):
        src = originals[j]
        dup = dict(src, stars=6 - src["stars"], text=_compose(rng, 0, 0, pos, neg))
        at = rows.index(src) + 1 + int(rng.integers(0, len(rows) - rows.index(src)))
        rows.insert(at, dup)

    def invalid(k: int) -> dict:
        base = dict(originals[int(rng.integers(len(originals)))])
        base["reviewer_id"] = f"X{k:04d}"
        kind = k % 5
        if kind == 0:
            base["stars"] = 9
        elif kind == 1:
            base["date"] = "2007-06-15"
        elif kind == 2:
            base["reviewer_id"] = ""
        elif kind == 3:
            base["date"] = "2016-02-30"
        else:
            base["order_to_review_days"] = -3
        return base

    for k in range(spec.n_invalid):
        rows.insert(int(rng.integers(0, len(rows) + 1)), invalid(k))

    per_firm: dict[str, dict] = {}
    for r in originals:
        d = per_firm.setdefault(r["firm_id"], {"n_reviews": 0, "products": set(), "first": r["date"], "last": r["date"]})
        d["n_reviews"] += 1
        d["products"].add(r["product_id"])
        d["first"] = min(d["first"], r["date"])
        d["last"] = max(d["last"], r["date"])
    manifest = {
        "review_spec": asdict(spec),
        "n_rows": len(rows),
        "n_valid_unique": len(originals),
        "n_duplicates": n_dup,
        "n_invalid": spec.n_invalid,
        "n_products": sum(len(d["products"]) for d in per_firm.values()),
        "n_firms": len(per_firm),
        "firms": {f: {"n_reviews": d["n_reviews"], "n_products": len(d["products"]),
                      "first_date": d["first"], "last_date": d["last"]} for f, d in sorted(per_firm.items())},
        "firm_weeks": [{"firm_id": f, "iso_year": y, "iso_week": w, **c} for (f, y, w), c in sorted(weekly.items())],
    }
    return ReviewCorpus(rows, manifest)


def write_dump(rows: Sequence[dict], path: str | Path, fmt: str = "csv") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            w = csv.DictWriter(fh, fieldnames=DUMP_FIELDS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        elif fmt == "jsonl":
            for r in rows:
                fh.write(json.dumps({k: r[k] for k in DUMP_FIELDS}, ensure_ascii=False, sort_keys=True) + "\n")
        else:
            raise ValueError(f"unknown dump format {fmt!r}")
    return path


def golden_features_from_manifest(manifest: dict) -> list[FirmWeekRow]:
    """Expected feature rows computed from the manifest counts alone.

    Diffs are defined when the preceding calendar week of the same firm has a
    row; count diffs are integer differences, star diffs are differences of
    shares (count / reviews).
    """
    cells = {(c["firm_id"], c["iso_year"], c["iso_week"]): c for c in manifest["firm_weeks"]}
    out = []
    for (firm, y, w), c in sorted(cells.items()):
        monday = dt.date.fromisocalendar(y, w, 1)
        py, pw_, _ = (monday - dt.timedelta(days=7)).isocalendar()
        prev = cells.get((firm, py, pw_))
        row = FirmWeekRow(firm, WeekIndex(y, w), c["n_reviews"], c["n_neg"], c["n_pos"],
                          {s: c[f"star{s}"] for s in range(1, 6)})
        if prev is not None:
            row.diff_neg = c["n_neg"] - prev["n_neg"]
            row.diff_pos = c["n_pos"] - prev["n_pos"]
            row.diff_star1 = c["star1"] / c["n_reviews"] - prev["star1"] / prev["n_reviews"]
            row.diff_star5 = c["star5"] / c["n_reviews"] - prev["star5"] / prev["n_reviews"]
        out.append(row)
    return out


# -- full bundle ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BundleSpec:
    reviews: ReviewSpec = ReviewSpec()
    cnst_effect: float = 0.0
    daily_noise_sd: float = 0.01
    history_years: int = 5
    sectors: bool = True
    seed: int = 0

    def with_seed(self, seed: int) -> "BundleSpec":
        return replace(self, seed=seed, reviews=replace(self.reviews, seed=seed))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x != x:
            return ""
        return repr(x)
    return str(x)


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _business_days(first: dt.date, last: dt.date) -> list[dt.date]:
    days, d = [], first
    while d <= last:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def gen_bundle(spec: BundleSpec, out_dir: str | Path) -> dict:
    """Write reviews.csv, market.csv, factors.csv, financials.csv, ccis.csv,
    sectors.csv and manifest.json into ``out_dir``; return the manifest.

    With ``cnst_effect`` = b, every trading day of week t+1 gets
    b * CNST[i,t] / (trading days in week t+1) added to firm i's return, so
    the weekly return carries (approximately) b * CNST of the previous week.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = gen_reviews(spec.reviews)
    write_dump(corpus.rows, out / "reviews.csv")
    golden = golden_features_from_manifest(corpus.manifest)
    cnst = {(r.firm_id, r.week.ordinal): r.diff_neg for r in golden if r.diff_neg is not None}

    rng = np.random.default_rng([spec.seed, 2])
    firms = spec.reviews.firm_ids()
    start = spec.reviews.start_date
    first_day = start - dt.timedelta(weeks=13)
    last_day = start + dt.timedelta(weeks=spec.reviews.n_weeks + 1, days=-1)
    days = _business_days(first_day, last_day)
    n_days = len(days)

    fac = {
        "mkt": 0.0003 + 0.01 * rng.standard_normal(n_days),
        "smb": 0.005 * rng.standard_normal(n_days),
        "hml": 0.005 * rng.standard_normal(n_days),
        "umd": 0.005 * rng.standard_normal(n_days),
    }
    _write_rows(out / "factors.csv", ("date", "mkt", "smb", "hml", "umd"),
                ((d.isoformat(), fac["mkt"][j], fac["smb"][j], fac["hml"][j], fac["umd"][j]) for j, d in enumerate(days)))

    week_of = [WeekIndex(*d.isocalendar()[:2]).ordinal for d in days]
    days_in_week: dict[int, int] = {}
    for o in week_of:
        days_in_week[o] = days_in_week.get(o, 0) + 1

    market_rows = []
    firm_params = {}
    for firm in firms:
        b_mkt, b_smb, b_hml = rng.uniform(0.6, 1.4), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)
        noise = spec.daily_noise_sd * rng.standard_normal(n_days)
        vol = np.exp(13.0 + 0.4 * rng.standard_normal(n_days))
        cap = float(np.exp(rng.uniform(21.0, 24.0)))
        firm_params[firm] = {"b_mkt": b_mkt, "b_smb": b_smb, "b_hml": b_hml}
        for j, d in enumerate(days):
            planted = spec.cnst_effect * cnst.get((firm, week_of[j] - 1), 0.0) / days_in_week[week_of[j]]
            r = b_mkt * fac["mkt"][j] + b_smb * fac["smb"][j] + b_hml * fac["hml"][j] + noise[j] + planted
            cap *= 1.0 + r
            market_rows.append((d.isoformat(), firm, r, vol[j], cap, vol[j] / cap * 1e3))
    _write_rows(out / "market.csv", ("date", "firm_id", "return", "volume", "tradable_cap", "turnover"), market_rows)

    first_q = pd.Period(year=start.year - spec.history_years, quarter=1, freq="Q")
    last_q = pd.Period(last_day, freq="Q")
    quarters = pd.period_range(first_q, last_q, freq="Q")
    fin_rows = []
    for firm in firms:
        ta = float(np.exp(rng.uniform(21.0, 23.0)))
        shares = ta / rng.uniform(5.0, 20.0)
        pays = int(rng.random() < 0.6)
        roa_level = rng.uniform(0.005, 0.03)
        roa = roa_level
        for q in quarters:
            ta *= 1.0 + 0.02 + 0.03 * rng.standard_normal()
            roa = roa_level + 0.6 * (roa - roa_level) + 0.004 * rng.standard_normal()
            ni = roa * ta
            cfo = ni + 0.01 * ta * rng.standard_normal()
            revenue = ta * (0.2 + 0.02 * rng.standard_normal()) * (1.0 + 0.1 * (q.quarter == 4))
            be = ta * rng.uniform(0.4, 0.6)
            fin_rows.append((
                firm, str(q), ta, ni, ni * 1.2 + 0.002 * ta * rng.standard_normal(), revenue / shares,
                cfo, ni - cfo, be, 0.05 * revenue * rng.uniform(0.8, 1.2), revenue, 0.02 * revenue * rng.uniform(0.5, 1.5),
                pays * 0.01 * be, be, be * rng.uniform(1.0, 3.0), pays, ni * rng.uniform(1.0, 1.1),
            ))
    _write_rows(out / "financials.csv", (
        "firm_id", "quarter", "total_assets", "net_profit", "operating_profit", "revenue_per_share",
        "cfo", "accruals", "book_equity", "sales_expense", "operating_revenue", "rd_expense",
        "dividends", "book_value", "market_value", "pays_dividend", "pre_extraordinary_income",
    ), fin_rows)

    months = pd.period_range(pd.Period(first_day, freq="M"), pd.Period(last_day, freq="M"), freq="M")
    level, ccis_rows = 108.0, []
    for m in months:
        level = 108.0 + 0.8 * (level - 108.0) + 3.0 * rng.standard_normal()
        ccis_rows.append((str(m), round(level, 2)))
    _write_rows(out / "ccis.csv", ("month", "ccis"), ccis_rows)

    sector_names = ("home appliances", "garments", "food", "electronics")
    sectors = {f: sector_names[k % len(sector_names)] for k, f in enumerate(firms)}
    if spec.sectors:
        _write_rows(out / "sectors.csv", ("firm_id", "sector"), sorted(sectors.items()))

    manifest = {
        "bundle_spec": asdict(spec),
        "generator": "numpy PCG64 (default_rng), streams [seed, 1] reviews and [seed, 2] market/financials",
        "cnst_effect": spec.cnst_effect,
        "firm_params": firm_params,
        "sectors": sectors if spec.sectors else {},
        "files": ["reviews.csv", "market.csv", "factors.csv", "financials.csv", "ccis.csv"]
                 + (["sectors.csv"] if spec.sectors else []),
        **corpus.manifest,
    }
    with (out / "manifest.json").open("w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    write_panel_csv(golden, out / "golden_features.csv")
    return manifest
