import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcta.linking import Cell, MentionKind, classify_mention, link_cell, link_table, parse_number

import oracles
from conftest import FIXTURE_KG, fixture_records
from kgcta.index import build_index
from kgcta.kg_store import load_kg

_INDEX = build_index(load_kg(FIXTURE_KG))

N, D, T = MentionKind.NUMERIC, MentionKind.DATE, MentionKind.TEXT


@pytest.mark.parametrize("mention,kind", [
    ("1984", N), ("-3.5", N), ("+7", N), ("12%", N), ("3,832,494", N), (".5", N), (" 42 ", N),
    ("1994-03-22", D), ("22/03/1994", D), ("3/22/94", D), ("March 22, 1994", D),
    ("22 March 1994", D), ("Mar 1994", D), ("june 5th", D),
    ("Peter Steele", T), ("Rust", T), ("1,23", T), ("12-34", T), ("", T), ("B52", T),
])
def test_classify(mention, kind):
    assert classify_mention(mention) is kind


def test_parse_number():
    assert parse_number("3,832,494") == 3832494
    assert parse_number("12.5%") == 12.5
    with pytest.raises(ValueError):
        parse_number("abc")


def test_numeric_and_empty_cells_unlinked(fixture_index):
    for m in ["42", "1994-03-22", "", "   ", "zzzz"]:
        lc = link_cell(fixture_index, Cell(0, 0, m))
        assert lc.candidates == [] and lc.ls == 0


def test_rust_candidates_match_oracle(fixture_index):
    docs = oracles.documents(fixture_records())
    lc = link_cell(fixture_index, Cell(0, 0, "Rust"), top_n=10)
    want = oracles.search(docs, "Rust", 10)
    assert lc.candidate_ids == [e for e, _ in want]
    assert {"A01", "L01", "F01"} <= set(lc.candidate_ids)
    assert lc.ls == pytest.approx(want[0][1], rel=1e-12)


def test_link_table_geometry_and_oracle(fixture_index):
    docs = oracles.documents(fixture_records())
    grid = [["Peter Steele", "Rust", "1994"], ["Joe Root", "Yorkshire", "England"],
            ["Steve Smith", "New South Wales", "Australia"]]
    lt = link_table(fixture_index, grid)
    assert (lt.n_rows, lt.n_cols) == (3, 3)
    for r, row in enumerate(grid):
        for c, m in enumerate(row):
            cell = lt.rows[r][c]
            assert (cell.cell.row, cell.cell.col, cell.cell.mention) == (r, c, m)
            assert cell.candidate_ids == [e for e, _ in oracles.search(docs, m, 10)] or cell.kind is not T


def test_all_numeric_table(fixture_index):
    lt = link_table(fixture_index, [["1", "2"], ["3.5", "4%"]])
    assert all(c.ls == 0 and not c.candidates for row in lt.rows for c in row)


def test_one_by_one(fixture_index):
    lt = link_table(fixture_index, [["Rust"]])
    assert lt.rows[0][0] == link_cell(fixture_index, Cell(0, 0, "Rust"))


def test_empty_table_rejected(fixture_index):
    with pytest.raises(ValueError):
        link_table(fixture_index, [])


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=20))
def test_classify_total_and_pure(s):
    k = classify_mention(s)
    assert k in (N, D, T) and classify_mention(s) is k


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.sampled_from(["Rust", "42", "Peter Steele", "India", "zz", "1994-03-22"]),
                         min_size=2, max_size=2), min_size=1, max_size=4))
def test_no_cross_cell_coupling(grid):
    index = _INDEX
    lt = link_table(index, grid)
    for r, row in enumerate(grid):
        for c, m in enumerate(row):
            cell = lt.rows[r][c]
            assert cell == link_cell(index, Cell(r, c, m))
            if cell.kind is not T:
                assert cell.candidates == []
