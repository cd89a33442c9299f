"""Firm-week aggregation of classified reviews and the four review features.

Level counts per firm-week: number of reviews, negative-dominant and
positive-dominant reviews, and the star histogram.  Diff features compare a
week with the immediately preceding calendar week:

* ``diff_neg`` / ``diff_pos`` are raw count differences (CNST / CPST);
* ``diff_star1`` / ``diff_star5`` are differences of star *shares* (OST / FST).

A diff is missing when the firm has no row for the previous week.
"""

from __future__ import annotations

import csv
import datetime as dt
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, NamedTuple

from .ingest import ReviewRecord, firm_date_ranges
from .sentiment import Lexicon, Polarity, score

WEEK_CONVENTIONS = ("iso", "friday")
PANEL_COLUMNS = (
    "firm_id", "iso_year", "iso_week", "n_reviews", "n_neg", "n_pos",
    "star1", "star2", "star3", "star4", "star5",
    "diff_neg", "diff_pos", "diff_star1", "diff_star5",
)


class WeekIndex(NamedTuple):
    year: int
    week: int

    @property
    def monday(self) -> dt.date:
        return dt.date.fromisocalendar(self.year, self.week, 1)

    @property
    def ordinal(self) -> int:
        """Consecutive integer index; adjacent weeks differ by exactly one."""
        return (self.monday.toordinal() - 1) // 7

    @classmethod
    def from_ordinal(cls, n: int) -> "WeekIndex":
        y, w, _ = dt.date.fromordinal(n * 7 + 1).isocalendar()
        return cls(y, w)

    def shift(self, k: int) -> "WeekIndex":
        return WeekIndex.from_ordinal(self.ordinal + k)

    def __str__(self) -> str:
        return f"{self.year}-W{self.week:02d}"


def assign_week(date: dt.date, convention: str = "iso") -> WeekIndex:
    """Map a date to its week.

    ``iso``: ISO-8601 Monday-Sunday weeks.  ``friday``: trading weeks ending on
    Friday, so Saturday and Sunday roll into the following week; labelled by
    the ISO week of that Friday.
    """
    if convention == "iso":
        anchor = date
    elif convention == "friday":
        anchor = date + dt.timedelta(days=(4 - date.weekday()) % 7)
    else:
        raise ValueError(f"unknown week convention {convention!r}")
    y, w, _ = anchor.isocalendar()
    return WeekIndex(y, w)


class ClassifiedReview(NamedTuple):
    firm_id: str
    date: dt.date
    stars: int
    polarity: Polarity


@dataclass
class FirmWeekRow:
    firm_id: str
    week: WeekIndex
    n_reviews: int
    n_neg: int
    n_pos: int
    star_counts: dict[int, int] = field(default_factory=lambda: {s: 0 for s in range(1, 6)})
    diff_neg: float | None = None
    diff_pos: float | None = None
    diff_star1: float | None = None
    diff_star5: float | None = None

    def star_ratio(self, s: int) -> float:
        return self.star_counts[s] / self.n_reviews


@dataclass
class EligibilitySet:
    eligible_firms: set[str]
    reasons: dict[str, str]

    def to_dict(self) -> dict:
        return {"eligible_firms": sorted(self.eligible_firms), "excluded": dict(sorted(self.reasons.items()))}


def classify_records(records: Iterable[ReviewRecord], lexicon: Lexicon) -> list[ClassifiedReview]:
    return [ClassifiedReview(r.firm_id, r.date, r.stars, score(r.text, lexicon)) for r in records]


def aggregate_firm_week(records: Iterable[ClassifiedReview], convention: str = "iso") -> list[FirmWeekRow]:
    """One level row per (firm, week) with at least one review, sorted by firm then week."""
    acc: dict[tuple[str, WeekIndex], FirmWeekRow] = {}
    for r in records:
        key = (r.firm_id, assign_week(r.date, convention))
        row = acc.get(key)
        if row is None:
            row = acc[key] = FirmWeekRow(r.firm_id, key[1], 0, 0, 0)
        row.n_reviews += 1
        row.star_counts[r.stars] += 1
        if r.polarity is Polarity.NEGATIVE:
            row.n_neg += 1
        elif r.polarity is Polarity.POSITIVE:
            row.n_pos += 1
    return [acc[k] for k in sorted(acc)]


def accumulate(rows: list[FirmWeekRow], n_weeks: int = 1) -> list[FirmWeekRow]:
    """Replace each row's levels by trailing sums over ``n_weeks`` calendar weeks (inclusive)."""
    if n_weeks < 1:
        raise ValueError("accumulation window must be at least one week")
    if n_weeks == 1:
        return [replace(r, star_counts=dict(r.star_counts)) for r in rows]
    index = {(r.firm_id, r.week.ordinal): r for r in rows}
    out = []
    for r in rows:
        window = [index.get((r.firm_id, r.week.ordinal - k)) for k in range(n_weeks)]
        window = [w for w in window if w is not None]
        stars = {s: sum(w.star_counts[s] for w in window) for s in range(1, 6)}
        out.append(FirmWeekRow(
            r.firm_id, r.week,
            n_reviews=sum(w.n_reviews for w in window),
            n_neg=sum(w.n_neg for w in window),
            n_pos=sum(w.n_pos for w in window),
            star_counts=stars,
        ))
    return out


def star_ratio_diffs(current: FirmWeekRow, previous: FirmWeekRow) -> dict[int, float]:
    return {s: current.star_ratio(s) - previous.star_ratio(s) for s in range(1, 6)}


def compute_diffs(rows: Iterable[FirmWeekRow]) -> list[FirmWeekRow]:
    rows = list(rows)
    index = {(r.firm_id, r.week.ordinal): r for r in rows}
    out = []
    for r in rows:
        prev = index.get((r.firm_id, r.week.ordinal - 1))
        new = replace(r, star_counts=dict(r.star_counts), diff_neg=None, diff_pos=None,
                      diff_star1=None, diff_star5=None)
        if prev is not None and prev.n_reviews > 0 and r.n_reviews > 0:
            ratios = star_ratio_diffs(r, prev)
            new.diff_neg = r.n_neg - prev.n_neg
            new.diff_pos = r.n_pos - prev.n_pos
            new.diff_star1 = ratios[1]
            new.diff_star5 = ratios[5]
        out.append(new)
    return out


def filter_eligible(
    rows: Iterable[FirmWeekRow],
    review_store: Iterable[ReviewRecord],
    min_reviews: int = 1000,
    min_span_days: int = 365,
) -> EligibilitySet:
    """A firm is kept iff it has ``min_reviews`` reviews spanning at least ``min_span_days``."""
    stats = firm_date_ranges(review_store)
    firms = set(stats) | {r.firm_id for r in rows}
    eligible, reasons = set(), {}
    for firm in sorted(firms):
        count, first, last = stats.get(firm, (0, None, None))
        if count < min_reviews:
            reasons[firm] = "review count"
        elif (last - first).days < min_span_days:
            reasons[firm] = "timespan"
        else:
            eligible.add(firm)
    return EligibilitySet(eligible, reasons)


def build_review_features(
    records: list[ReviewRecord],
    lexicon: Lexicon,
    convention: str = "iso",
    accumulation_weeks: int = 1,
) -> list[FirmWeekRow]:
    levels = aggregate_firm_week(classify_records(records, lexicon), convention)
    return compute_diffs(accumulate(levels, accumulation_weeks))


# -- CSV ----------------------------------------------------------------------

def fmt_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        if x != x:
            return ""
        if x == int(x) and abs(x) < 1e15:
            return str(int(x))
        return repr(x)
    return str(x)


def write_panel_csv(rows: Iterable[FirmWeekRow], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_COLUMNS)
        for r in rows:
            w.writerow([
                r.firm_id, r.week.year, r.week.week, r.n_reviews, r.n_neg, r.n_pos,
                *(r.star_counts[s] for s in range(1, 6)),
                *(fmt_value(v) for v in (r.diff_neg, r.diff_pos, r.diff_star1, r.diff_star5)),
            ])


def read_panel_csv(path: str | Path) -> list[FirmWeekRow]:
    def opt(v: str) -> float | None:
        return None if v == "" else float(v)

    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for d in csv.DictReader(fh):
            rows.append(FirmWeekRow(
                d["firm_id"], WeekIndex(int(d["iso_year"]), int(d["iso_week"])),
                int(d["n_reviews"]), int(d["n_neg"]), int(d["n_pos"]),
                {s: int(d[f"star{s}"]) for s in range(1, 6)},
                opt(d["diff_neg"]), opt(d["diff_pos"]), opt(d["diff_star1"]), opt(d["diff_star5"]),
            ))
    return rows


def per_firm_totals(rows: Iterable[FirmWeekRow]) -> dict[str, int]:
    totals: dict[str, int] = defaultdict(int)
    for r in rows:
        totals[r.firm_id] += r.n_reviews
    return dict(totals)
