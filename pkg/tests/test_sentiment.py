from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import greedy_scan_oracle
from reviewpanel.sentiment import (
    Lexicon,
    LexiconError,
    Polarity,
    SentimentCount,
    classify,
    count_tendentious,
    load_demo_lexicon,
    load_lexicon,
    score,
)


def write_lex(tmp_path, pos, neg):
    p, n = tmp_path / "pos.txt", tmp_path / "neg.txt"
    p.write_text("\n".join(pos) + "\n", encoding="utf-8")
    n.write_text("\n".join(neg) + "\n", encoding="utf-8")
    return p, n


def test_load_basic(tmp_path):
    lex = load_lexicon(*write_lex(tmp_path, ["good", "great"], ["bad"]))
    assert len(lex.positive_terms) == 2
    assert len(lex.negative_terms) == 1


def test_term_in_both_files_is_named(tmp_path):
    with pytest.raises(LexiconError, match="fine"):
        load_lexicon(*write_lex(tmp_path, ["good", "fine"], ["bad", "fine"]))


def test_duplicate_lines_collapse(tmp_path):
    lex = load_lexicon(*write_lex(tmp_path, ["good"], ["bad", "bad", "  bad  "]))
    assert lex.negative_terms == frozenset({"bad"})


def test_comments_and_blank_lines_ignored(tmp_path):
    lex = load_lexicon(*write_lex(tmp_path, ["# header", "", "good"], ["bad", "#bad2"]))
    assert lex.positive_terms == frozenset({"good"})
    assert lex.negative_terms == frozenset({"bad"})


def test_empty_lexicon_is_an_error(tmp_path):
    with pytest.raises(LexiconError, match="empty"):
        load_lexicon(*write_lex(tmp_path, ["# nothing"], ["bad"]))


def test_missing_file(tmp_path):
    with pytest.raises(LexiconError, match="not found"):
        load_lexicon(tmp_path / "a.txt", tmp_path / "b.txt")


def test_case_collision_across_sets_is_an_error():
    with pytest.raises(LexiconError):
        Lexicon(frozenset({"Good"}), frozenset({"gOOD"}))


def test_empty_text(small_lexicon):
    assert count_tendentious("", small_lexicon) == SentimentCount(0, 0)


def test_longest_match_wins(small_lexicon):
    assert count_tendentious("very bad not good", small_lexicon) == SentimentCount(nw=1, pw=1)


def test_matches_do_not_overlap():
    lex = Lexicon(frozenset({"ab"}), frozenset({"bc"}))
    assert count_tendentious("abc", lex) == SentimentCount(0, 1)
    assert count_tendentious("xbc", lex) == SentimentCount(1, 0)


def test_case_folding(small_lexicon):
    assert count_tendentious("GOOD, Very BAD", small_lexicon) == SentimentCount(1, 1)


def test_no_negation_handling(small_lexicon):
    assert score("not good", small_lexicon) is Polarity.POSITIVE


def test_chinese_text(small_lexicon):
    assert count_tendentious("质量很好，物流差，差评", small_lexicon) == SentimentCount(2, 1)


@pytest.mark.parametrize("nw,pw,expected", [
    (2, 1, Polarity.NEGATIVE),
    (3, 3, Polarity.NEUTRAL),
    (0, 1, Polarity.POSITIVE),
    (0, 0, Polarity.NEUTRAL),
])
def test_classify(nw, pw, expected):
    assert classify(SentimentCount(nw, pw)) is expected


def test_demo_lexicon_loads():
    lex = load_demo_lexicon()
    assert lex.polarity_of("好") is Polarity.POSITIVE
    assert lex.polarity_of("差") is Polarity.NEGATIVE
    assert not lex.positive_terms & lex.negative_terms


terms = st.text(alphabet="abcA好差", min_size=1, max_size=4)


@given(st.sets(terms, max_size=6), st.sets(terms, max_size=6), st.text(alphabet="abcAB好差 ", max_size=60))
def test_count_matches_brute_force(pos, neg, text):
    neg = {t for t in neg if t.casefold() not in {p.casefold() for p in pos}}
    lex = Lexicon(frozenset(pos), frozenset(neg))
    assert tuple(count_tendentious(text, lex)) == greedy_scan_oracle(text, pos, neg)


@given(st.sets(terms, min_size=1, max_size=6), st.text(alphabet="abc好差 ", max_size=40))
def test_lexicon_order_is_irrelevant(pos, text):
    ordered = sorted(pos)
    a = Lexicon(frozenset(ordered), frozenset({"zz"}))
    b = Lexicon(frozenset(reversed(ordered)), frozenset({"zz"}))
    assert count_tendentious(text, a) == count_tendentious(text, b)


@given(st.integers(0, 5), st.integers(0, 5))
def test_exactly_one_polarity(nw, pw):
    pol = classify(SentimentCount(nw, pw))
    assert [pol is Polarity.NEGATIVE, pol is Polarity.POSITIVE, pol is Polarity.NEUTRAL].count(True) == 1


@given(st.lists(st.sampled_from(["good", "bad", "xx", " "]), max_size=20))
def test_adding_disjoint_term_never_decreases(words):
    # "qq" shares no characters with existing terms or filler, so inserting it cannot break a match
    text = "qq".join(words) + "qq"
    base = Lexicon(frozenset({"good"}), frozenset({"bad"}))
    more = Lexicon(frozenset({"good", "qq"}), frozenset({"bad"}))
    before, after = count_tendentious(text, base), count_tendentious(text, more)
    assert after.pw == before.pw + text.count("qq")
    assert after.nw == before.nw
