"""Table -> AnnotatedTable: link, prune, filter rows, generate candidate types."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from typing import Iterable

from .candidate_types import column_candidates
from .corpus import Table
from .filtering import filter_rows, prune_table
from .index import InvertedIndex
from .kg_store import KnowledgeGraph
from .linking import Cell, LinkedCell, LinkedTable, link_cell
from .serialization import AnnotatedTable, feature_tokens


class Annotator:
    """Holds the KG and index plus a per-mention linking cache."""

    def __init__(
        self,
        kg: KnowledgeGraph,
        index: InvertedIndex,
        top_n: int = 10,
        j: int = 3,
        k: int = 25,
        feature_budget: int = 128,
        row_filter: str = "score",
    ):
        self.kg, self.index = kg, index
        self.top_n, self.j, self.k = top_n, j, k
        self.feature_budget = feature_budget
        self.row_filter = row_filter
        self._link = lru_cache(maxsize=1 << 16)(self._link_mention)

    def _link_mention(self, mention: str):
        lc = link_cell(self.index, Cell(0, 0, mention), self.top_n)
        return lc.kind, tuple(lc.candidates), lc.ls

    def link(self, table: Table) -> LinkedTable:
        rows = []
        for r, row in enumerate(table.rows):
            out = []
            for c, m in enumerate(row):
                kind, cands, ls = self._link(m)
                out.append(LinkedCell(Cell(r, c, m), kind, list(cands), ls))
            rows.append(out)
        return LinkedTable(table.table_id, rows)

    def annotate(self, table: Table) -> AnnotatedTable:
        linked = self.link(table)
        filtered = filter_rows(prune_table(linked, self.kg), self.k, self.row_filter, table.table_id)
        cands, feats, sources, cols, linked_cols = [], [], [], [], []
        for c in range(table.n_cols):
            cands.append(column_candidates(filtered, c, self.kg, self.j, table.column(c)))
            toks, src = feature_tokens(filtered, c, self.kg, self.feature_budget)
            feats.append(toks)
            sources.append(src)
            cols.append([cell.mention for cell in filtered.column(c)])
            linked_cols.append(any(cell.candidates for cell in linked.column(c)))
        return AnnotatedTable(
            table.table_id,
            cols,
            cands,
            feats,
            sources,
            labels=dict(table.labels),
            retained_rows=list(filtered.row_ids),
            row_scores=list(filtered.row_scores),
            linked_columns=linked_cols,
        )


_worker: Annotator | None = None


def _init_worker(args):
    global _worker
    _worker = Annotator(*args[:2], **args[2])


def _annotate_in_worker(table: Table) -> AnnotatedTable:
    return _worker.annotate(table)


def annotate_corpus(
    tables: Iterable[Table],
    kg: KnowledgeGraph,
    index: InvertedIndex,
    workers: int = 1,
    **knobs,
) -> list[AnnotatedTable]:
    tables = list(tables)
    if workers <= 1:
        annotator = Annotator(kg, index, **knobs)
        return [annotator.annotate(t) for t in tables]
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=((kg, index, knobs),)) as ex:
        return list(ex.map(_annotate_in_worker, tables, chunksize=8))
