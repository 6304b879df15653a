"""Per-column candidate types from pruned entities, or numeric summaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .filtering import FilteredTable
from .kg_store import Entity, KnowledgeGraph
from .linking import MentionKind, classify_mention, parse_number

TYPED, NUMERIC, PADDING = "typed", "numeric", "padding"


@dataclass(frozen=True)
class CandidateType:
    id: str
    label: str
    cts: float


@dataclass
class ColumnCandidates:
    column: int
    kind: str
    types: list[CandidateType] = field(default_factory=list)
    summary: tuple[float, float, float] | None = None


def column_entity_union(filtered: FilteredTable, c: int) -> set[str]:
    out: set[str] = set()
    for cell in filtered.column(c):
        out.update(cell.entity_ids)
    return out


def _looks_like_person(label: str) -> bool:
    parts = label.split()
    return (
        len(parts) >= 2
        and all(p[:1].isupper() for p in parts)
        and not any(ch.isdigit() for ch in label)
    )


def label_filter(entity: Entity | str) -> bool:
    """False for labels that read as a date or a personal name."""
    label = entity if isinstance(entity, str) else entity.label
    if classify_mention(label) is MentionKind.DATE:
        return False
    return not _looks_like_person(label)


def allowed_mask(kg: KnowledgeGraph) -> np.ndarray:
    mask = getattr(kg, "_type_allowed", None)
    if mask is None:
        mask = np.fromiter((label_filter(kg.entities[e]) for e in kg.ids), dtype=np.bool_, count=len(kg))
        kg._type_allowed = mask
    return mask


def candidate_type_scores(filtered: FilteredTable, c: int, kg: KnowledgeGraph) -> dict[str, int]:
    """Type id -> score, for every label-filtered neighbor with positive support.

    A type nominated by the neighborhoods of entities in rows R collects, once
    per nominating row, the overlap scores of entities in every *other* row
    that also neighbor it.
    """
    ents, os_vals, row_ptr = [], [], [0]
    for cell in filtered.column(c):
        for e, _, o in cell.entries:
            ents.append(kg.index_of[e])
            os_vals.append(o)
        row_ptr.append(len(ents))
    if not ents:
        return {}
    scores = kernels.type_scores(
        np.asarray(ents, dtype=np.int64),
        np.asarray(row_ptr, dtype=np.int64),
        np.asarray(os_vals, dtype=np.int64),
        kg.adj_indptr,
        kg.adj_indices,
        allowed_mask(kg),
    )
    return {kg.ids[i]: int(scores[i]) for i in np.nonzero(scores > 0)[0]}


def select_candidate_types(
    scores: dict[str, float], j: int = 3, kg: KnowledgeGraph | None = None
) -> list[CandidateType]:
    if j < 1:
        raise ValueError("j must be >= 1")
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:j]
    return [
        CandidateType(tid, kg.entities[tid].label if kg else tid, s) for tid, s in ranked
    ]


def numeric_summary(values: list[str]) -> tuple[float, float, float]:
    """(mean, population variance, median) of numeric cell strings."""
    if not values:
        raise ValueError("numeric summary of an empty column")
    nums = []
    for i, v in enumerate(values):
        try:
            nums.append(parse_number(v))
        except ValueError:
            raise ValueError(f"cell {i} is not numeric: {v!r}") from None
    arr = np.asarray(nums, dtype=np.float64)
    return float(arr.mean()), float(arr.var()), float(np.median(arr))


def is_numeric_column(mentions: list[str]) -> bool:
    return bool(mentions) and all(classify_mention(m) is MentionKind.NUMERIC for m in mentions)


def column_candidates(
    filtered: FilteredTable,
    c: int,
    kg: KnowledgeGraph,
    j: int = 3,
    all_mentions: list[str] | None = None,
) -> ColumnCandidates:
    """Classify column ``c`` as typed, numeric or padding.

    ``all_mentions`` is the column over the full (unfiltered) table; numeric
    detection and the summary statistics use it when given.
    """
    mentions = all_mentions if all_mentions is not None else [x.mention for x in filtered.column(c)]
    if is_numeric_column(mentions):
        return ColumnCandidates(c, NUMERIC, summary=numeric_summary(mentions))
    types = select_candidate_types(candidate_type_scores(filtered, c, kg), j, kg)
    if types:
        return ColumnCandidates(c, TYPED, types=types)
    return ColumnCandidates(c, PADDING)
