"""Lexicon loading and tendentious-word counting.

Matching is dictionary-driven maximum matching: scan left to right, take the
longest lexicon term starting at the current position, count it for its
polarity and jump past it; otherwise move one character.  Text and terms are
case-folded first.  No negation handling: "not good" counts one positive word.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple


class LexiconError(ValueError):
    pass


class Polarity(enum.Enum):
    NEGATIVE = "negative"
    POSITIVE = "positive"
    NEUTRAL = "neutral"


class SentimentCount(NamedTuple):
    nw: int
    pw: int


@dataclass(frozen=True)
class Lexicon:
    positive_terms: frozenset[str]
    negative_terms: frozenset[str]
    _lookup: dict[str, Polarity] = field(init=False, repr=False, compare=False)
    _max_len: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pos = frozenset(t.casefold() for t in self.positive_terms)
        neg = frozenset(t.casefold() for t in self.negative_terms)
        if "" in pos or "" in neg:
            raise LexiconError("lexicon contains an empty term")
        both = sorted(pos & neg)
        if both:
            raise LexiconError(f"term(s) listed as both positive and negative: {', '.join(both)}")
        lookup = {t: Polarity.POSITIVE for t in pos}
        lookup.update({t: Polarity.NEGATIVE for t in neg})
        object.__setattr__(self, "positive_terms", pos)
        object.__setattr__(self, "negative_terms", neg)
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "_max_len", max((len(t) for t in lookup), default=0))

    def polarity_of(self, term: str) -> Polarity | None:
        return self._lookup.get(term.casefold())


def read_terms(path: str | Path) -> set[str]:
    """One term per line; blank lines and ``#`` comment lines are ignored."""
    terms = set()
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            term = line.strip()
            if term and not term.startswith("#"):
                terms.add(term)
    return terms


def load_lexicon(pos_path: str | Path, neg_path: str | Path) -> Lexicon:
    for p in (pos_path, neg_path):
        if not Path(p).is_file():
            raise LexiconError(f"lexicon file not found: {p}")
    pos, neg = read_terms(pos_path), read_terms(neg_path)
    if not pos:
        raise LexiconError(f"empty positive lexicon: {pos_path}")
    if not neg:
        raise LexiconError(f"empty negative lexicon: {neg_path}")
    return Lexicon(frozenset(pos), frozenset(neg))


def demo_lexicon_paths() -> tuple[Path, Path]:
    base = resources.files("reviewpanel") / "data"
    return Path(str(base / "lexicon_pos.txt")), Path(str(base / "lexicon_neg.txt"))


def load_demo_lexicon() -> Lexicon:
    return load_lexicon(*demo_lexicon_paths())


def count_tendentious(text: str, lexicon: Lexicon) -> SentimentCount:
    s = text.casefold()
    lookup, max_len = lexicon._lookup, lexicon._max_len
    n = len(s)
    nw = pw = 0
    i = 0
    while i < n:
        for length in range(min(max_len, n - i), 0, -1):
            pol = lookup.get(s[i:i + length])
            if pol is not None:
                if pol is Polarity.NEGATIVE:
                    nw += 1
                else:
                    pw += 1
                i += length
                break
        else:
            i += 1
    return SentimentCount(nw, pw)


def classify(count: SentimentCount) -> Polarity:
    if count.nw > count.pw:
        return Polarity.NEGATIVE
    if count.pw > count.nw:
        return Polarity.POSITIVE
    return Polarity.NEUTRAL


def score(text: str, lexicon: Lexicon) -> Polarity:
    return classify(count_tendentious(text, lexicon))
