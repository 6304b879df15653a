"""Mention classification and cell-to-entity linking."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field

from .index import InvertedIndex, search


class MentionKind(enum.Enum):
    TEXT = "text"
    NUMERIC = "numeric"
    DATE = "date"


_NUMBER = re.compile(
    r"""^[+-]?
    (?: \d{1,3}(?:,\d{3})+ (?:\.\d+)?   # thousands separated
      | \d+ (?:\.\d+)?
      | \.\d+ )
    %?$""",
    re.VERBOSE,
)
_MONTH = (
    r"(?:jan(?:uary)?|feb(?:ruary)?|mar(?:ch)?|apr(?:il)?|may|june?|july?|aug(?:ust)?"
    r"|sep(?:t(?:ember)?)?|oct(?:ober)?|nov(?:ember)?|dec(?:ember)?)\.?"
)
_DAY = r"\d{1,2}(?:st|nd|rd|th)?"
_DATE_PATTERNS = [
    re.compile(r"^\d{4}-\d{1,2}-\d{1,2}(?:[t ]\d{1,2}:\d{2}(?::\d{2})?)?$"),
    re.compile(r"^\d{4}/\d{1,2}/\d{1,2}$"),
    re.compile(r"^\d{1,2}[/.-]\d{1,2}[/.-]\d{2,4}$"),
    re.compile(rf"^{_MONTH}\s+{_DAY},?\s+\d{{4}}$"),
    re.compile(rf"^{_DAY}\s+(?:of\s+)?{_MONTH},?\s+\d{{4}}$"),
    re.compile(rf"^{_MONTH},?\s+\d{{4}}$"),
    re.compile(rf"^{_MONTH}\s+{_DAY}$"),
    re.compile(rf"^{_DAY}\s+{_MONTH}$"),
]


def classify_mention(mention: str) -> MentionKind:
    s = mention.strip()
    if _NUMBER.match(s):
        return MentionKind.NUMERIC
    low = s.lower()
    if any(p.match(low) for p in _DATE_PATTERNS):
        return MentionKind.DATE
    return MentionKind.TEXT


def parse_number(mention: str) -> float:
    s = mention.strip()
    if not _NUMBER.match(s):
        raise ValueError(f"not a number: {mention!r}")
    return float(s.replace(",", "").rstrip("%"))


@dataclass(frozen=True)
class Cell:
    row: int
    col: int
    mention: str


@dataclass
class LinkedCell:
    cell: Cell
    kind: MentionKind
    candidates: list[tuple[str, float]] = field(default_factory=list)
    ls: float = 0.0

    @property
    def candidate_ids(self) -> list[str]:
        return [eid for eid, _ in self.candidates]


@dataclass
class LinkedTable:
    table_id: str
    rows: list[list[LinkedCell]]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def column(self, c: int) -> list[LinkedCell]:
        return [row[c] for row in self.rows]


def link_cell(index: InvertedIndex, cell: Cell, top_n: int = 10) -> LinkedCell:
    kind = classify_mention(cell.mention)
    if kind is not MentionKind.TEXT:
        return LinkedCell(cell, kind)
    cands = search(index, cell.mention, top_n) if cell.mention.strip() else []
    return LinkedCell(cell, kind, cands, cands[0][1] if cands else 0.0)


def link_table(
    index: InvertedIndex, table: list[list[str]], top_n: int = 10, table_id: str = ""
) -> LinkedTable:
    if not table or not table[0]:
        raise ValueError("cannot link an empty table")
    rows = [
        [link_cell(index, Cell(r, c, m), top_n) for c, m in enumerate(row)]
        for r, row in enumerate(table)
    ]
    return LinkedTable(table_id, rows)
