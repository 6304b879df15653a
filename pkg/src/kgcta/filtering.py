"""Row-context pruning of candidate entities and top-k row selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .kg_store import KnowledgeGraph, one_hop_set
from .linking import LinkedCell, LinkedTable


@dataclass
class PrunedCell:
    linked: LinkedCell
    entries: list[tuple[str, float, int]]  # (entity id, bm25, overlap score)
    ls: float

    @property
    def entity_ids(self) -> list[str]:
        return [e for e, _, _ in self.entries]

    @property
    def mention(self) -> str:
        return self.linked.cell.mention


@dataclass
class FilteredTable:
    table_id: str
    rows: list[list[PrunedCell]]
    row_ids: list[int]
    row_scores: list[float]
    # first retained row; feature sequences are drawn from it
    lead_row: list[PrunedCell] | None = None

    @property
    def n_cols(self) -> int:
        src = self.rows or ([self.lead_row] if self.lead_row else [])
        return len(src[0]) if src else 0

    def column(self, c: int) -> list[PrunedCell]:
        return [row[c] for row in self.rows]


FALLBACK_WEIGHT = 1


def _no_context(row: list[LinkedCell], c1: int) -> bool:
    """True when no other cell of the row has any candidate (includes 1-column rows)."""
    return not any(cell.candidates for c2, cell in enumerate(row) if c2 != c1)


def overlap_entity_set(row: list[LinkedCell], c1: int, kg: KnowledgeGraph) -> set[str]:
    """Own candidates that neighbor some other column's candidates.

    Rows where no other column offers candidates keep the cell's candidates
    unchanged.
    """
    own = set(row[c1].candidate_ids)
    if _no_context(row, c1):
        return own
    out: set[str] = set()
    for c2, cell in enumerate(row):
        if c2 != c1:
            out |= own & one_hop_set(kg, cell.candidate_ids)
    return out


def overlap_score(eid: str, row: list[LinkedCell], c1: int, kg: KnowledgeGraph) -> int:
    """Number of other columns whose candidates' neighborhoods contain ``eid``."""
    return sum(
        eid in one_hop_set(kg, cell.candidate_ids) for c2, cell in enumerate(row) if c2 != c1
    )


def prune_row(row: list[LinkedCell], kg: KnowledgeGraph) -> list[PrunedCell]:
    """Overlap sets and scores for every cell of one row in a single pass.

    Cells without row context keep every candidate with weight
    ``FALLBACK_WEIGHT`` in place of an overlap score.
    """
    cands = np.asarray(
        [kg.index_of[e] for cell in row for e in cell.candidate_ids], dtype=np.int64
    )
    col_ptr = np.zeros(len(row) + 1, dtype=np.int64)
    col_ptr[1:] = np.cumsum([len(cell.candidates) for cell in row])
    counts = kernels.overlap_counts(cands, col_ptr, kg.adj_indptr, kg.adj_indices, len(kg))
    out = []
    for c, cell in enumerate(row):
        if _no_context(row, c):
            entries = [(e, s, FALLBACK_WEIGHT) for e, s in cell.candidates]
        else:
            os_c = counts[col_ptr[c] : col_ptr[c + 1]]
            entries = [(e, s, int(o)) for (e, s), o in zip(cell.candidates, os_c) if o > 0]
        out.append(PrunedCell(cell, entries, cell_linking_score(entries)))
    return out


def cell_linking_score(entries) -> float:
    if isinstance(entries, PrunedCell):
        entries = entries.entries
    return max((s for _, s, _ in entries), default=0.0)


def row_linking_score(row: list[PrunedCell]) -> float:
    return sum(cell.ls for cell in row)


def prune_table(linked: LinkedTable, kg: KnowledgeGraph) -> list[list[PrunedCell]]:
    return [prune_row(row, kg) for row in linked.rows]


def filter_rows(
    pruned: list[list[PrunedCell]], k: int = 25, mode: str = "score", table_id: str = ""
) -> FilteredTable:
    """Keep k rows: by descending row linking score (``score``) or as given (``original``)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = [row_linking_score(r) for r in pruned]
    by_score = sorted(range(len(pruned)), key=lambda i: (-scores[i], i))
    if mode == "score":
        keep = by_score[:k]
    elif mode == "original":
        keep = list(range(min(k, len(pruned))))
    else:
        raise ValueError(f"unknown row filter mode: {mode!r}")
    lead = pruned[keep[0]] if keep else None
    return FilteredTable(
        table_id, [pruned[i] for i in keep], keep, [scores[i] for i in keep], lead
    )
