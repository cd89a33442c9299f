from __future__ import annotations

import datetime as dt
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_record
from reviewpanel.panel import (
    ClassifiedReview,
    FirmWeekRow,
    WeekIndex,
    accumulate,
    aggregate_firm_week,
    assign_week,
    build_review_features,
    compute_diffs,
    filter_eligible,
    per_firm_totals,
    read_panel_csv,
    star_ratio_diffs,
    write_panel_csv,
)
from reviewpanel.sentiment import Polarity

NEG, POS, NEU = Polarity.NEGATIVE, Polarity.POSITIVE, Polarity.NEUTRAL


def cr(date, stars=3, pol=NEU, firm="F1"):
    return ClassifiedReview(firm, dt.date.fromisoformat(date), stars, pol)


def level(week: WeekIndex, n_neg, n_pos, stars: dict, firm="F1"):
    counts = {s: stars.get(s, 0) for s in range(1, 6)}
    return FirmWeekRow(firm, week, sum(counts.values()), n_neg, n_pos, counts)


def test_iso_week_examples():
    assert assign_week(dt.date(2015, 1, 5)) == WeekIndex(2015, 2)
    assert assign_week(dt.date(2016, 1, 1)) == WeekIndex(2015, 53)


@given(st.dates(dt.date(2008, 11, 1), dt.date(2017, 12, 31)))
def test_same_monday_sunday_span_same_week(d):
    monday = d - dt.timedelta(days=d.weekday())
    assert all(assign_week(monday + dt.timedelta(days=k)) == assign_week(d) for k in range(7))
    assert assign_week(d).monday == monday


@given(st.dates(dt.date(2008, 11, 1), dt.date(2017, 12, 31)))
def test_week_ordinals_are_consecutive(d):
    w = assign_week(d)
    nxt = assign_week(d + dt.timedelta(days=7))
    assert nxt.ordinal - w.ordinal == 1
    assert WeekIndex.from_ordinal(w.ordinal) == w
    assert w.shift(1) == nxt
    assert (w < nxt) == (w.ordinal < nxt.ordinal)


def test_friday_convention_rolls_weekend_forward():
    # 2015-01-09 is a Friday; the weekend belongs to the next trading week
    assert assign_week(dt.date(2015, 1, 9), "friday") == WeekIndex(2015, 2)
    assert assign_week(dt.date(2015, 1, 10), "friday") == WeekIndex(2015, 3)
    assert assign_week(dt.date(2015, 1, 11), "friday") == WeekIndex(2015, 3)
    with pytest.raises(ValueError):
        assign_week(dt.date(2015, 1, 9), "lunar")


def test_aggregate_example():
    rows = aggregate_firm_week([
        cr("2015-01-05", 1, NEG), cr("2015-01-06", 1, NEG), cr("2015-01-07", 5, POS), cr("2015-01-11", 3, NEU),
    ])
    assert len(rows) == 1
    r = rows[0]
    assert (r.n_reviews, r.n_neg, r.n_pos) == (4, 2, 1)
    assert r.star_counts == {1: 2, 2: 0, 3: 1, 4: 0, 5: 1}


def test_aggregate_skips_empty_weeks_and_ignores_order():
    recs = [cr("2015-01-05", 2, NEG), cr("2015-01-20", 4, POS), cr("2015-01-21", 4, NEU, firm="F2")]
    rows = aggregate_firm_week(recs)
    assert [(r.firm_id, r.week) for r in rows] == [
        ("F1", WeekIndex(2015, 2)), ("F1", WeekIndex(2015, 4)), ("F2", WeekIndex(2015, 4))]
    shuffled = recs[::-1]
    assert aggregate_firm_week(shuffled) == rows


def test_diff_examples():
    w1, w2 = WeekIndex(2015, 10), WeekIndex(2015, 11)
    prev = level(w1, 3, 1, {1: 4, 5: 4})
    cur = level(w2, 5, 2, {1: 2, 3: 8})
    first, second = compute_diffs([prev, cur])
    assert first.diff_neg is None and first.diff_star1 is None
    assert second.diff_neg == 2
    assert second.diff_pos == 1
    assert second.diff_star1 == pytest.approx(-0.3, abs=1e-15)
    assert second.diff_star5 == pytest.approx(-0.5, abs=1e-15)


def test_gap_week_leaves_diffs_absent():
    rows = compute_diffs([level(WeekIndex(2015, 10), 1, 0, {1: 1}), level(WeekIndex(2015, 12), 2, 0, {1: 2})])
    assert rows[1].diff_neg is None and rows[1].diff_pos is None


def test_diffs_cross_iso_year_boundary():
    rows = compute_diffs([level(WeekIndex(2015, 53), 1, 0, {1: 1}), level(WeekIndex(2016, 1), 4, 0, {1: 4})])
    assert rows[1].diff_neg == 3


def test_diffs_do_not_leak_between_firms():
    rows = compute_diffs([level(WeekIndex(2015, 10), 1, 0, {1: 1}, "A"), level(WeekIndex(2015, 11), 4, 0, {1: 4}, "B")])
    assert rows[1].diff_neg is None


@st.composite
def firm_history(draw):
    n = draw(st.integers(1, 12))
    rows = []
    start = WeekIndex(2015, 1).ordinal
    for k in range(n):
        stars = {s: draw(st.integers(0, 4)) for s in range(1, 6)}
        if sum(stars.values()) == 0:
            stars[3] = 1
        total = sum(stars.values())
        n_neg = draw(st.integers(0, total))
        n_pos = draw(st.integers(0, total - n_neg))
        rows.append(level(WeekIndex.from_ordinal(start + k), n_neg, n_pos, stars))
    return rows


@given(firm_history())
def test_star_ratio_diffs_sum_to_zero(rows):
    for prev, cur in zip(rows, rows[1:]):
        diffs = star_ratio_diffs(cur, prev)
        assert abs(sum(diffs.values())) < 1e-12
        assert all(-1.0 <= v <= 1.0 for v in diffs.values())


@given(firm_history())
def test_count_diffs_telescope(rows):
    out = compute_diffs(rows)
    assert sum(r.diff_neg for r in out[1:]) == rows[-1].n_neg - rows[0].n_neg
    assert sum(r.diff_pos for r in out[1:]) == rows[-1].n_pos - rows[0].n_pos
    for r in out:
        assert r.n_neg + r.n_pos <= r.n_reviews
        assert sum(r.star_counts.values()) == r.n_reviews


def history(firm: str, n: int, first: str, last: str):
    d0, d1 = dt.date.fromisoformat(first), dt.date.fromisoformat(last)
    span = (d1 - d0).days
    out = []
    for k in range(n):
        d = d0 + dt.timedelta(days=span * k // max(n - 1, 1))
        out.append(make_record(firm=firm, reviewer=f"U{k}", date=d.isoformat()))
    return out


def test_eligibility_boundaries():
    store = (history("A", 999, "2014-01-01", "2015-12-31")
             + history("B", 5000, "2014-01-01", "2014-10-31")
             + history("C", 1000, "2014-01-01", "2015-01-01")
             + history("D", 1000, "2014-01-01", "2014-12-31"))
    elig = filter_eligible([], store)
    assert elig.eligible_firms == {"C"}
    assert elig.reasons == {"A": "review count", "B": "timespan", "D": "timespan"}


def test_eligibility_partition_with_custom_thresholds():
    store = history("A", 10, "2015-01-01", "2015-03-01") + history("B", 3, "2015-01-01", "2015-01-02")
    elig = filter_eligible([], store, min_reviews=5, min_span_days=30)
    assert elig.eligible_firms == {"A"}
    assert set(elig.reasons) | elig.eligible_firms == {"A", "B"}
    assert not set(elig.reasons) & elig.eligible_firms


def test_accumulate_trailing_window():
    rows = [level(WeekIndex.from_ordinal(100 + k), k, 0, {1: k + 1}) for k in range(4)]
    acc = accumulate(rows, 2)
    assert [r.n_neg for r in acc] == [0, 1, 3, 5]
    assert [r.n_reviews for r in acc] == [1, 3, 5, 7]
    assert accumulate(rows, 1) == rows
    with pytest.raises(ValueError):
        accumulate(rows, 0)


def test_csv_round_trip(tmp_path):
    rows = compute_diffs([level(WeekIndex(2015, 10), 3, 1, {1: 4, 5: 4}), level(WeekIndex(2015, 11), 5, 2, {1: 2, 3: 8})])
    write_panel_csv(rows, tmp_path / "f.csv")
    back = read_panel_csv(tmp_path / "f.csv")
    assert back == rows
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header.startswith("firm_id,iso_year,iso_week,n_reviews")
    assert (tmp_path / "f.csv").read_text().splitlines()[1].endswith(",,,,")


def test_features_from_records(small_lexicon):
    recs = [
        make_record(reviewer="a", date="2015-01-05", stars=1, text="bad bad good"),
        make_record(reviewer="b", date="2015-01-06", stars=5, text="great"),
        make_record(reviewer="c", date="2015-01-12", stars=1, text="差"),
        make_record(reviewer="d", date="2015-01-13", stars=1, text="very bad"),
    ]
    random.Random(0).shuffle(recs)
    rows = build_review_features(recs, small_lexicon)
    assert [(r.n_reviews, r.n_neg, r.n_pos) for r in rows] == [(2, 1, 1), (2, 2, 0)]
    assert rows[1].diff_neg == 1 and rows[1].diff_pos == -1
    assert rows[1].diff_star1 == pytest.approx(0.5)
    assert per_firm_totals(rows) == {"F1": 4}
