from __future__ import annotations

import datetime as dt
import json
from collections import defaultdict
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from reviewpanel.econometrics import PanelDataset
from reviewpanel.ingest import ReviewRecord
from reviewpanel.sentiment import Lexicon

ROOT = Path(__file__).resolve().parents[1]
TOY_DIR = ROOT / "data" / "toy"

# criterion number -> (title, list of outcomes); filled by the report hook
_CRITERIA: dict[int, dict] = defaultdict(lambda: {"title": "", "outcomes": []})


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA[number]
    entry["title"] = title
    if call.when == "setup" and call.excinfo is not None:
        entry["outcomes"].append(False)
    elif call.when == "call":
        entry["outcomes"].append(call.excinfo is None)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        ok = bool(entry["outcomes"]) and all(entry["outcomes"])
        n = len(entry["outcomes"])
        terminalreporter.write_line(
            f"criterion {number}: {'PASS' if ok else 'FAIL'}  {entry['title']} ({sum(entry['outcomes'])}/{n} checks)")


@pytest.fixture
def toy_dir() -> Path:
    return TOY_DIR


@pytest.fixture(scope="session")
def toy_manifest() -> dict:
    return json.loads((TOY_DIR / "manifest.json").read_text(encoding="utf-8"))


@pytest.fixture
def small_lexicon() -> Lexicon:
    return Lexicon(frozenset({"good", "great", "好"}), frozenset({"bad", "very bad", "差"}))


def make_record(firm="F1", product="P1", reviewer="U1", date="2015-01-05", stars=5, text="", lag=None) -> ReviewRecord:
    return ReviewRecord(firm_id=firm, product_id=product, reviewer_id=reviewer,
                        date=dt.date.fromisoformat(date), stars=stars, text=text,
                        order_to_review_days=lag, record_id=f"{firm}/{product}/{reviewer}/{date}")


def random_panel(rng: np.random.Generator, n_firms: int, n_weeks: int, k: int = 2,
                 drop: float = 0.0, start: int = 2000) -> PanelDataset:
    """Unbalanced random panel with firm and week effects planted in y."""
    rows = []
    eta = rng.standard_normal(n_firms)
    lam = rng.standard_normal(n_weeks)
    beta = rng.standard_normal(k)
    for i in range(n_firms):
        for t in range(n_weeks):
            if rng.random() < drop:
                continue
            x = rng.standard_normal(k)
            rows.append({"firm_id": f"F{i}", "t": start + t, "y": float(x @ beta + eta[i] + lam[t] + rng.standard_normal()),
                         **{f"x{j + 1}": float(x[j]) for j in range(k)}})
    return PanelDataset(pd.DataFrame(rows))
