"""Review dump ingestion: parsing, validation, deduplication and the clean store.

Dumps are either CSV (header row) or line-delimited JSON with the keys
``firm_id, product_id, reviewer_id, date, stars, text`` and an optional
``order_to_review_days``.  Rows that fail validation are counted, logged with
their line number and skipped.  Duplicates share the key
``(firm_id, product_id, reviewer_id, date)``; the first occurrence in input
order survives.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator
from urllib.parse import quote, unquote

logger = logging.getLogger(__name__)

DUMP_FIELDS = ("firm_id", "product_id", "reviewer_id", "date", "stars", "text", "order_to_review_days")
STORE_FIELDS = ("record_id",) + DUMP_FIELDS
DEFAULT_WINDOW = (dt.date(2008, 11, 1), dt.date(2017, 12, 31))


class IngestError(Exception):
    """Fatal ingestion problem (unreadable file, unknown format)."""


class InvalidRow(ValueError):
    pass


@dataclass(frozen=True)
class RawReview:
    firm_id: str
    product_id: str
    reviewer_id: str
    date: dt.date
    stars: int
    text: str
    order_to_review_days: int | None = None

    @property
    def key(self) -> tuple[str, str, str, dt.date]:
        return (self.firm_id, self.product_id, self.reviewer_id, self.date)


@dataclass(frozen=True)
class ReviewRecord(RawReview):
    record_id: str = ""


@dataclass
class IngestReport:
    records_read: int = 0
    records_kept: int = 0
    duplicates_dropped: int = 0
    invalid_dropped: int = 0
    per_firm_counts: dict[str, int] = field(default_factory=dict)

    def check(self) -> None:
        total = self.records_kept + self.duplicates_dropped + self.invalid_dropped
        if self.records_read != total:
            raise AssertionError(f"report does not balance: read={self.records_read}, accounted={total}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_firm_counts"] = dict(sorted(self.per_firm_counts.items()))
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IngestReport":
        return cls(**d)


def record_id(key: tuple[str, str, str, dt.date]) -> str:
    """Stable id derived from the dedup key (unique after deduplication)."""
    raw = "\x1f".join([key[0], key[1], key[2], key[3].isoformat()])
    return hashlib.blake2b(raw.encode("utf-8"), digest_size=8).hexdigest()


def _parse_int(value, name: str) -> int:
    if isinstance(value, bool):
        raise InvalidRow(f"{name} is not an integer: {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    raise InvalidRow(f"{name} is not an integer: {value!r}")


def validate_row(row: dict, window: tuple[dt.date, dt.date] | None = DEFAULT_WINDOW) -> RawReview:
    """Turn a raw mapping into a RawReview or raise InvalidRow."""
    ids = {}
    for name in ("firm_id", "product_id", "reviewer_id"):
        value = row.get(name)
        if value is None or not isinstance(value, (str, int)) or str(value).strip() == "":
            raise InvalidRow(f"missing {name}")
        ids[name] = str(value).strip()

    raw_date = row.get("date")
    if not isinstance(raw_date, str):
        raise InvalidRow(f"date is not a string: {raw_date!r}")
    try:
        date = dt.date.fromisoformat(raw_date.strip())
    except ValueError:
        raise InvalidRow(f"unparseable date {raw_date!r}") from None
    if window is not None and not (window[0] <= date <= window[1]):
        raise InvalidRow(f"date {date} outside sample window")

    stars = _parse_int(row.get("stars"), "stars")
    if stars not in (1, 2, 3, 4, 5):
        raise InvalidRow(f"stars out of range: {stars}")

    text = row.get("text")
    if text is None:
        text = ""
    if not isinstance(text, str):
        raise InvalidRow("text is not a string")

    lag = row.get("order_to_review_days")
    if lag is None or (isinstance(lag, str) and lag.strip() == ""):
        lag = None
    else:
        lag = _parse_int(lag, "order_to_review_days")
        if lag < 0:
            raise InvalidRow(f"negative order_to_review_days: {lag}")

    return RawReview(date=date, stars=stars, text=text, order_to_review_days=lag, **ids)


def _iter_rows(path: Path, fmt: str) -> Iterator[tuple[int, dict | None]]:
    # yields (line number, mapping or None when the line cannot be decoded)
    if fmt == "csv":
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            missing = {"firm_id", "product_id", "reviewer_id", "date", "stars", "text"} - set(reader.fieldnames or ())
            if missing:
                raise IngestError(f"{path}: CSV header lacks columns {sorted(missing)}")
            start = reader.line_num + 1
            for row in reader:
                if None in row:  # more fields than the header
                    yield start, None
                else:
                    yield start, row
                start = reader.line_num + 1
    elif fmt in ("jsonl", "ndjson", "json"):
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    yield lineno, None
                    continue
                yield lineno, obj if isinstance(obj, dict) else None
    else:
        raise IngestError(f"unknown dump format {fmt!r}; expected 'csv' or 'jsonl'")


def parse_dump(
    path: str | Path,
    fmt: str = "csv",
    window: tuple[dt.date, dt.date] | None = DEFAULT_WINDOW,
    report: IngestReport | None = None,
) -> Iterator[RawReview]:
    """Yield well-formed reviews from one dump file in file order.

    ``report.records_read`` and ``report.invalid_dropped`` are updated as the
    stream is consumed.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestError(f"cannot read dump {path}: file not found")
    if report is None:
        report = IngestReport()
    try:
        for lineno, row in _iter_rows(path, fmt):
            report.records_read += 1
            if row is None:
                report.invalid_dropped += 1
                logger.warning("%s:%d: malformed row skipped", path, lineno)
                continue
            try:
                yield validate_row(row, window)
            except InvalidRow as exc:
                report.invalid_dropped += 1
                logger.warning("%s:%d: invalid row skipped (%s)", path, lineno, exc)
    except UnicodeDecodeError as exc:
        raise IngestError(f"cannot read dump {path}: {exc}") from exc


def deduplicate(reviews: Iterable[RawReview], report: IngestReport | None = None) -> Iterator[ReviewRecord]:
    """Keep the first review per (firm, product, reviewer, date) key."""
    seen: set[tuple] = set()
    for r in reviews:
        key = r.key
        if key in seen:
            if report is not None:
                report.duplicates_dropped += 1
            continue
        seen.add(key)
        if report is not None:
            report.records_kept += 1
            report.per_firm_counts[r.firm_id] = report.per_firm_counts.get(r.firm_id, 0) + 1
        fields = {k: getattr(r, k) for k in DUMP_FIELDS}
        yield ReviewRecord(record_id=record_id(key), **fields)


def ingest(
    paths: Iterable[str | Path],
    fmt: str = "csv",
    window: tuple[dt.date, dt.date] | None = DEFAULT_WINDOW,
) -> tuple[list[ReviewRecord], IngestReport]:
    """Parse every dump in order and deduplicate globally."""
    report = IngestReport()

    def stream():
        for p in paths:
            yield from parse_dump(p, fmt, window, report)

    records = list(deduplicate(stream(), report))
    report.check()
    return records, report


# -- clean store -------------------------------------------------------------

def firm_filename(firm_id: str) -> str:
    return quote(firm_id, safe="") + ".csv"


def write_store(records: Iterable[ReviewRecord], out_dir: str | Path, report: IngestReport | None = None) -> Path:
    """Write one CSV per firm (input order preserved) plus ``ingest_report.json``."""
    out_dir = Path(out_dir)
    store = out_dir / "store"
    store.mkdir(parents=True, exist_ok=True)
    for old in store.glob("*.csv"):
        old.unlink()
    by_firm: dict[str, list[ReviewRecord]] = {}
    for r in records:
        by_firm.setdefault(r.firm_id, []).append(r)
    for firm, rows in sorted(by_firm.items()):
        with (store / firm_filename(firm)).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STORE_FIELDS)
            for r in rows:
                w.writerow([
                    r.record_id, r.firm_id, r.product_id, r.reviewer_id, r.date.isoformat(),
                    r.stars, r.text, "" if r.order_to_review_days is None else r.order_to_review_days,
                ])
    if report is not None:
        with (out_dir / "ingest_report.json").open("w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return store


def read_store(store_dir: str | Path) -> list[ReviewRecord]:
    store = Path(store_dir)
    if not store.is_dir():
        raise IngestError(f"review store not found: {store}")
    out: list[ReviewRecord] = []
    for path in sorted(store.glob("*.csv")):
        firm = unquote(path.stem)
        with path.open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                rev = validate_row(row, window=None)
                if rev.firm_id != firm:
                    raise IngestError(f"{path}: record for firm {rev.firm_id!r} in wrong partition")
                out.append(ReviewRecord(record_id=row["record_id"], **{k: getattr(rev, k) for k in DUMP_FIELDS}))
    return out


def summarize(records: Iterable[ReviewRecord], sectors: dict[str, str] | None = None) -> list[dict]:
    """Counts of reviews, products and firms, overall and per sector when a map is given."""
    records = list(records)

    def row(label, recs):
        return {
            "group": label,
            "n_reviews": len(recs),
            "n_products": len({(r.firm_id, r.product_id) for r in recs}),
            "n_firms": len({r.firm_id for r in recs}),
        }

    rows = [row("all", records)]
    if sectors:
        groups: dict[str, list[ReviewRecord]] = {}
        for r in records:
            groups.setdefault(sectors.get(r.firm_id, "unassigned"), []).append(r)
        for label in sorted(groups):
            rows.append(row(label, groups[label]))
    return rows


def firm_date_ranges(records: Iterable[ReviewRecord]) -> dict[str, tuple[int, dt.date, dt.date]]:
    """firm -> (review count, first date, last date)."""
    counts: Counter[str] = Counter()
    first: dict[str, dt.date] = {}
    last: dict[str, dt.date] = {}
    for r in records:
        counts[r.firm_id] += 1
        if r.firm_id not in first or r.date < first[r.firm_id]:
            first[r.firm_id] = r.date
        if r.firm_id not in last or r.date > last[r.firm_id]:
            last[r.firm_id] = r.date
    return {f: (counts[f], first[f], last[f]) for f in counts}
