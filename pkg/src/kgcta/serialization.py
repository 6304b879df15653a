"""Vocabulary, feature sequences and column-wise table serialization."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .candidate_types import NUMERIC, TYPED, ColumnCandidates
from .filtering import FilteredTable
from .index import tokenize
from .kg_store import KnowledgeGraph, neighbors

PAD, UNK, COLSTART, SEQEND, MASK = "[PAD]", "[UNK]", "[COLSTART]", "[SEQEND]", "[MASK]"
SPECIALS = (PAD, UNK, COLSTART, SEQEND, MASK)

PLAIN, GROUND_TRUTH, MASKED = "plain", "ground_truth", "masked"


class Vocabulary:
    def __init__(self, tokens: Iterable[str]):
        self.itos: list[str] = list(SPECIALS)
        for t in tokens:
            if t not in SPECIALS:
                self.itos.append(t)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate vocabulary tokens")

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos

    @property
    def pad(self) -> int:
        return 0

    def id(self, token: str) -> int:
        return self.stoi.get(token, 1)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, 1) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def to_list(self) -> list[str]:
        return list(self.itos)


def build_vocabulary(
    tables: Iterable[Iterable[Iterable[str]]],
    kg: KnowledgeGraph | None = None,
    extra_texts: Iterable[str] = (),
) -> Vocabulary:
    """Specials, then tokens by descending frequency, ties alphabetical.

    ``tables`` are grids of cell strings (training split only); KG labels and
    predicates and any ``extra_texts`` (label names, rendered prefixes) are
    counted alongside.
    """
    counts: Counter = Counter()
    for table in tables:
        for row in table:
            for cell in row:
                counts.update(tokenize(cell))
    if kg is not None:
        for eid in kg.ids:
            counts.update(tokenize(kg.entities[eid].label))
            for p, _ in kg.adjacency[eid]:
                counts.update(tokenize(p))
    for text in extra_texts:
        counts.update(tokenize(text))
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(t for t, _ in ordered)


@dataclass(frozen=True)
class Budgets:
    column: int = 64
    column_cap: int = 8
    max_seq: int = 512
    feature: int = 128
    label: int = 4
    prefix: int = 16


@dataclass
class FeatureSequence:
    token_ids: list[int]
    source: str | None = None


@dataclass
class AnnotatedTable:
    """A table after linking, pruning, row filtering and candidate-type generation."""

    table_id: str
    columns: list[list[str]]                # mentions, retained rows in filtered order
    candidates: list[ColumnCandidates]
    feature_tokens: list[list[str]]         # empty list -> PAD-only feature sequence
    feature_sources: list[str | None]
    labels: dict[int, str] = field(default_factory=dict)
    retained_rows: list[int] = field(default_factory=list)
    row_scores: list[float] = field(default_factory=list)
    linked_columns: list[bool] = field(default_factory=list)

    @property
    def n_cols(self) -> int:
        return len(self.columns)


def feature_tokens(
    filtered: FilteredTable, c: int, kg: KnowledgeGraph, budget: int = 128
) -> tuple[list[str], str | None]:
    """Label of the best entity in the lead row's cell, then predicate/neighbor pairs.

    Falls back to the cell's unpruned BM25 candidates when pruning left none.
    """
    row = filtered.lead_row
    if not row:
        return [], None
    cell = row[c]
    source = cell.entries[0][0] if cell.entries else (
        cell.linked.candidates[0][0] if cell.linked.candidates else None
    )
    if source is None:
        return [], None
    toks = tokenize(kg.entities[source].label)
    for pred, nbr in neighbors(kg, source):
        if len(toks) >= budget:
            break
        toks.extend(tokenize(pred))
        toks.extend(tokenize(nbr.label))
    return toks[:budget], source


def build_feature_sequence(
    filtered: FilteredTable, c: int, kg: KnowledgeGraph, vocab: Vocabulary, budget: int = 128
) -> FeatureSequence:
    toks, source = feature_tokens(filtered, c, kg, budget)
    if not toks:
        return FeatureSequence([vocab.pad], None)
    return FeatureSequence(vocab.encode(toks), source)


def format_number(x: float) -> str:
    return np.format_float_positional(x, precision=4, unique=False, fractional=False, trim="-")


def prefix_text(cc: ColumnCandidates) -> str | None:
    """Rendered candidate-type prefix; ``None`` means a PAD slot."""
    if cc.kind == TYPED:
        return " ".join(t.label for t in cc.types)
    if cc.kind == NUMERIC:
        return "num " + " ".join(format_number(v) for v in cc.summary)
    return None


def prefix_tokens(cc: ColumnCandidates, vocab: Vocabulary, budget: int, no_ct: bool = False) -> list[int]:
    text = None if (no_ct and cc.kind == TYPED) else prefix_text(cc)
    if text is None:
        return [vocab.pad]
    ids = vocab.encode(tokenize(text))[:budget]
    return ids or [vocab.pad]


def serialize_column(cells: list[str], vocab: Vocabulary, budget: int = 64) -> tuple[list[int], bool]:
    """Token ids of the cells in row order, cut at ``budget``; also reports truncation."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    ids: list[int] = []
    for m in cells:
        ids.extend(vocab.encode(tokenize(m)))
        if len(ids) > budget:
            return ids[:budget], True
    return ids, False


@dataclass
class SerializedInput:
    token_ids: list[int]
    colstart: list[int]
    mask_pos: list[int | None]
    label_pos: list[int | None]
    columns: list[int]
    truncated: list[int] = field(default_factory=list)
    table_id: str = ""

    def segment_ids(self) -> list[int]:
        """1-based column slot of every position; SEQEND joins the last column."""
        seg, slot = [], 0
        starts = set(self.colstart)
        for p in range(len(self.token_ids)):
            slot += p in starts
            seg.append(slot)
        return seg

    def position_ids(self) -> list[int]:
        """Offset of every position from its column's COLSTART."""
        pos, start = [], 0
        starts = set(self.colstart)
        for p in range(len(self.token_ids)):
            if p in starts:
                start = p
            pos.append(p - start)
        return pos

    def to_record(self) -> dict:
        return {
            "table_id": self.table_id,
            "columns": self.columns,
            "token_ids": self.token_ids,
            "colstart": self.colstart,
            "mask_pos": self.mask_pos,
            "label_pos": self.label_pos,
            "truncated": self.truncated,
        }


def serialize_table(
    table: AnnotatedTable,
    mode: str,
    vocab: Vocabulary,
    budgets: Budgets = Budgets(),
    no_ct: bool = False,
    targets: Iterable[int] | None = None,
) -> list[SerializedInput]:
    """One SerializedInput per chunk of at most ``budgets.column_cap`` columns.

    Every column gets ``COLSTART prefix cells``. Target columns (default: all)
    carry the MASK token (masked mode) or their label tokens (ground-truth
    mode) in front of the candidate-type prefix. The cell allowance per column
    does not depend on ``mode``, so the three modes differ only in the prefix.
    """
    if mode not in (PLAIN, GROUND_TRUTH, MASKED):
        raise ValueError(f"unknown serialization mode: {mode!r}")
    target_set = set(range(table.n_cols)) if targets is None else set(targets)
    if mode == GROUND_TRUTH:
        missing = sorted(c for c in target_set if c not in table.labels)
        if missing:
            raise ValueError(f"table {table.table_id}: no ground-truth label for columns {missing}")
    out = []
    cols = list(range(table.n_cols))
    for start in range(0, len(cols), budgets.column_cap):
        chunk = cols[start : start + budgets.column_cap]
        segment_cap = (budgets.max_seq - 1) // len(chunk)
        prefix_budget = min(budgets.prefix, segment_cap - 1 - budgets.label)
        if prefix_budget < 1:
            raise ValueError(f"max_seq={budgets.max_seq} too small for {len(chunk)} columns")
        ids: list[int] = []
        colstart, mask_pos, label_pos, truncated = [], [], [], []
        for c in chunk:
            prefix = prefix_tokens(table.candidates[c], vocab, prefix_budget, no_ct)
            lead: list[int] = []
            lead_pos = None
            if c in target_set and mode == MASKED:
                lead = [vocab.id(MASK)]
            elif c in target_set and mode == GROUND_TRUTH:
                lead = vocab.encode(tokenize(table.labels[c]))[: budgets.label] or [vocab.id(UNK)]
            allowance = min(budgets.column, segment_cap - 1 - budgets.label - len(prefix))
            if allowance >= 1:
                cells, cut = serialize_column(table.columns[c], vocab, allowance)
            else:
                cells, cut = [], any(tokenize(m) for m in table.columns[c])
            if cut:
                truncated.append(c)
            colstart.append(len(ids))
            ids.append(vocab.id(COLSTART))
            if lead:
                lead_pos = len(ids)
            ids.extend(lead)
            ids.extend(prefix)
            ids.extend(cells)
            mask_pos.append(lead_pos if mode == MASKED else None)
            label_pos.append(lead_pos if mode == GROUND_TRUTH else None)
        ids.append(vocab.id(SEQEND))
        out.append(
            SerializedInput(ids, colstart, mask_pos, label_pos, chunk, truncated, table.table_id)
        )
    return out


def dump_serialized(inputs: Iterable[SerializedInput], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in inputs:
            fh.write(json.dumps(s.to_record(), sort_keys=True) + "\n")
