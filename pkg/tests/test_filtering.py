import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgcta.filtering import (
    PrunedCell,
    cell_linking_score,
    filter_rows,
    overlap_entity_set,
    overlap_score,
    prune_row,
    prune_table,
    row_linking_score,
)
from kgcta.linking import Cell, LinkedCell, MentionKind, link_table

import oracles
from conftest import FIXTURE_KG, random_mentions
from kgcta.index import build_index
from kgcta.kg_store import load_kg


def cands(row):
    return [c.candidate_ids for c in row]


def scores(row):
    return [[s for _, s in c.candidates] for c in row]


def test_rust_album_survives_next_to_steele(fixture_kg, fixture_index):
    lt = link_table(fixture_index, [["Peter Steele", "Rust"]])
    row = lt.rows[0]
    assert {"A01", "L01", "F01"} <= set(row[1].candidate_ids)
    assert overlap_entity_set(row, 1, fixture_kg) == {"A01"}
    pruned = prune_row(row, fixture_kg)
    assert pruned[1].entity_ids == ["A01"]
    assert pruned[0].entity_ids == ["M01"]


def test_homonym_pruned_by_row_context(fixture_kg, fixture_index):
    lt = link_table(fixture_index, [["Steve Smith", "New South Wales", "Australia"]])
    row = lt.rows[0]
    assert {"C04", "M05"} <= set(row[0].candidate_ids)
    assert overlap_entity_set(row, 0, fixture_kg) == {"C04"}
    assert overlap_score("C04", row, 0, fixture_kg) == 2


def test_no_cross_column_intersection(fixture_kg, fixture_index):
    row = link_table(fixture_index, [["Python", "Yorkshire"]]).rows[0]
    assert overlap_entity_set(row, 0, fixture_kg) == set()
    assert overlap_score("L02", row, 0, fixture_kg) == 0
    assert prune_row(row, fixture_kg)[0].entries == []


def test_context_free_rows_keep_candidates(fixture_kg, fixture_index):
    single = link_table(fixture_index, [["Rust"]]).rows[0]
    assert overlap_entity_set(single, 0, fixture_kg) == set(single[0].candidate_ids)
    beside_numbers = link_table(fixture_index, [["Rust", "1994", "zzzz"]]).rows[0]
    pruned = prune_row(beside_numbers, fixture_kg)
    assert pruned[0].entity_ids == beside_numbers[0].candidate_ids
    assert all(o == 1 for _, _, o in pruned[0].entries)


def test_random_rows_match_oracle(random_world):
    recs, kg, index = random_world
    nb = oracles.neighbor_map(recs)
    mentions = random_mentions(3, 300)
    grids = [[mentions[i + j] for j in range(3)] for i in range(0, 297, 3)]
    lt = link_table(index, grids)
    for row in lt.rows:
        rc, rs = cands(row), scores(row)
        want = oracles.pruned_row(rc, rs, nb)
        got = prune_row(row, kg)
        for c in range(3):
            assert overlap_entity_set(row, c, kg) == oracles.overlap_set(rc, c, nb)
            assert got[c].entries == want[c]
            assert got[c].ls == oracles.cell_ls(want[c])
            for e in rc[c]:
                assert overlap_score(e, row, c, kg) == oracles.overlap_score(e, rc, c, nb)
        assert row_linking_score(got) == pytest.approx(oracles.row_ls(want), rel=1e-12)


def test_cell_score_examples():
    assert cell_linking_score([]) == 0
    assert cell_linking_score([("a", 0.3, 1), ("b", 0.9, 1)]) == 0.9


def _pc(score):
    lc = LinkedCell(Cell(0, 0, "x"), MentionKind.TEXT, [("e", score)], score)
    return PrunedCell(lc, [("e", score, 1)] if score else [], score)


def test_filter_rows_example():
    table = [[_pc(1.0)], [_pc(3.0)], [_pc(2.0)]]
    ft = filter_rows(table, k=2)
    assert ft.row_ids == [1, 2] and ft.row_scores == [3.0, 2.0]
    assert ft.lead_row is table[1]
    orig = filter_rows(table, k=2, mode="original")
    assert orig.row_ids == [0, 1] and orig.lead_row is table[0]
    with pytest.raises(ValueError):
        filter_rows(table, k=0)
    with pytest.raises(ValueError):
        filter_rows(table, mode="bogus")


def test_all_numeric_row(fixture_kg, fixture_index):
    row = prune_row(link_table(fixture_index, [["1", "2.5"]]).rows[0], fixture_kg)
    assert row_linking_score(row) == 0


def test_single_cell_row(fixture_kg, fixture_index):
    row = prune_row(link_table(fixture_index, [["Mumbai"]]).rows[0], fixture_kg)
    assert row_linking_score(row) == row[0].ls > 0


_score = st.floats(0, 10, allow_nan=False).map(lambda x: round(x, 1))


@settings(max_examples=200, deadline=None)
@given(st.lists(_score, min_size=1, max_size=40), st.integers(1, 50))
def test_filter_rows_properties(row_scores, k):
    table = [[_pc(s)] for s in row_scores]
    ft = filter_rows(table, k)
    assert len(ft.rows) == min(k, len(table))
    assert all(a >= b for a, b in zip(ft.row_scores, ft.row_scores[1:]))
    assert all(ft.rows[i] is table[r] for i, r in enumerate(ft.row_ids))
    assert len(set(ft.row_ids)) == len(ft.row_ids)
    if k >= len(table):
        assert sorted(ft.row_ids) == list(range(len(table)))
    for a, b in zip(ft.row_ids, ft.row_ids[1:]):
        if row_scores[a] == row_scores[b]:
            assert a < b


_words = st.sampled_from(["Rust", "Peter Steele", "India", "Steve Smith", "Mumbai Indians", "42",
                          "Joe Root", "England", "October Rust", "zzz", "Python"])


@settings(max_examples=150, deadline=None)
@given(st.lists(st.lists(_words, min_size=3, max_size=3), min_size=1, max_size=6))
def test_pruning_soundness_and_determinism(grid):
    lt = link_table(_INDEX, grid)
    a, b = prune_table(lt, _KG), prune_table(lt, _KG)
    assert a == b
    for prow, lrow in zip(a, lt.rows):
        for p, l in zip(prow, lrow):
            assert set(p.entity_ids) <= set(l.candidate_ids)
            assert all(o >= 0 for _, _, o in p.entries)


_KG = load_kg(FIXTURE_KG)
_INDEX = build_index(_KG)
