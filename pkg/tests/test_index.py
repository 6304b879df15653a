import logging
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcta.index import bm25_score, build_index, idf, load_index, save_index, search, tokenize
from kgcta.kg_store import EntityNotFound, Entity, build_kg

import oracles
from conftest import WORDS, fixture_records, kg_from_records, random_mentions, random_records


def kg_of(*labels):
    return build_kg([Entity(f"E{i}", l) for i, l in enumerate(labels)], [])


@pytest.mark.parametrize("text,expected", [
    ("", []),
    ("Peter Steele", ["peter", "steele"]),
    ("U.S.-based (2021)", ["u", "s", "based", "2021"]),
    ("snake_case  tabs\t", ["snake", "case", "tabs"]),
])
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_single_entity_index():
    index = build_index(kg_of("rust"))
    assert index.N == 1 and index.avgwl == 1
    assert index.postings == {"rust": [("E0", 1)]}


def test_document_frequencies():
    index = build_index(kg_of("rust album", "rust language"))
    assert index.doc_freq("rust") == 2 and index.doc_freq("album") == 1


def test_postings_match_brute_force(fixture_kg):
    index = build_index(fixture_kg)
    docs = oracles.documents(fixture_records())
    brute = {}
    for eid, toks in docs.items():
        for t in set(toks):
            brute.setdefault(t, []).append((eid, toks.count(t)))
    assert {t: sorted(p) for t, p in index.postings.items()} == {t: sorted(p) for t, p in brute.items()}
    assert index.doc_len == {e: len(t) for e, t in docs.items()}


def test_idf_hand_values():
    assert idf(build_index(kg_of("rust")), "rust") == pytest.approx(math.log(4 / 3), rel=1e-12)
    ten = build_index(kg_of(*[f"w{i}" for i in range(10)]))
    assert idf(ten, "absent") == pytest.approx(math.log(22), rel=1e-12)


def test_bm25_hand_value():
    index = build_index(kg_of("rust", "steele"))
    assert bm25_score(index, ["rust"], "E0") == pytest.approx(math.log(2), rel=1e-12)
    assert bm25_score(index, [], "E0") == 0
    assert bm25_score(index, ["steele"], "E0") == 0
    with pytest.raises(EntityNotFound):
        bm25_score(index, ["rust"], "E9")


def test_empty_token_entity_skipped(caplog):
    with caplog.at_level(logging.WARNING):
        index = build_index(kg_of("rust", "!!!"))
    assert index.N == 1 and "no indexable tokens" in caplog.text


def test_bad_parameters():
    with pytest.raises(ValueError):
        build_index(kg_of("a"), k1=-1)
    with pytest.raises(ValueError):
        build_index(kg_of("a"), b=1.5)
    with pytest.raises(ValueError):
        build_index(build_kg([], []))
    with pytest.raises(ValueError):
        search(build_index(kg_of("a")), "a", top_n=0)


def test_search_matches_oracle_on_random_world(random_world):
    recs, kg, index = random_world
    docs = oracles.documents(recs)
    for m in random_mentions(7, 60):
        got = search(index, m, top_n=len(docs))
        want = oracles.search(docs, m, len(docs))
        assert [e for e, _ in got] == [e for e, _ in want]
        for (_, a), (_, b) in zip(got, want):
            assert a == pytest.approx(b, rel=1e-9)


def test_search_top1_is_argmax(fixture_index):
    docs = oracles.documents(fixture_records())
    for m in ["Rust", "Peter Steele", "Steve Smith", "Mumbai", "golang"]:
        [(best, _)] = search(fixture_index, m, top_n=1)
        assert best == oracles.search(docs, m, 1)[0][0]


def test_search_no_match(fixture_index):
    assert search(fixture_index, "zzzz qqqq") == []


def test_save_load_roundtrip(tmp_path, fixture_kg):
    index = build_index(fixture_kg)
    p = tmp_path / "idx.jsonl"
    save_index(index, p, "abc")
    again = load_index(p, "abc")
    assert again.postings == index.postings and again.doc_len == index.doc_len
    assert load_index(p, "other") is None
    q = tmp_path / "idx2.jsonl"
    save_index(again, q, "abc")
    assert p.read_bytes() == q.read_bytes()


_RECS = random_records(5, 80, 100)
_INDEX = build_index(kg_from_records(_RECS))
_mention = st.lists(st.sampled_from(WORDS + ["nope"]), min_size=0, max_size=4).map(" ".join)


@settings(max_examples=150, deadline=None)
@given(_mention, st.sampled_from(sorted(_INDEX.doc_len)))
def test_bm25_nonnegative(m, eid):
    assert bm25_score(_INDEX, tokenize(m), eid) >= 0


@settings(max_examples=150, deadline=None)
@given(_mention, st.integers(1, 15))
def test_search_sorted_and_bounded(m, top_n):
    res = search(_INDEX, m, top_n)
    assert len(res) <= top_n
    assert all(s > 0 for _, s in res)
    assert all((-a[1], a[0]) <= (-b[1], b[0]) for a, b in zip(res, res[1:]))


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(sorted(_INDEX.postings)), st.sampled_from(sorted(_INDEX.postings)))
def test_idf_monotone(w1, w2):
    n1, n2 = _INDEX.doc_freq(w1), _INDEX.doc_freq(w2)
    if n1 < n2:
        assert idf(_INDEX, w1) > idf(_INDEX, w2)
    assert idf(_INDEX, w1) > 0


def test_unrelated_entity_matches_oracle():
    recs = random_records(9, 50, 60)
    extra = recs + [{"id": "Z999", "label": "completely unrelated", "aliases": [], "edges": []}]
    index = build_index(kg_from_records(extra))
    docs = oracles.documents(extra)
    for m in random_mentions(9, 30):
        assert [e for e, _ in search(index, m, 50)] == [e for e, _ in oracles.search(docs, m, 50)]
