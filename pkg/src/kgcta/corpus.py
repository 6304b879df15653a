"""Table corpus I/O and the synthetic micro-corpus generator."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CorpusError(ValueError):
    pass


@dataclass
class Table:
    table_id: str
    rows: list[list[str]]
    labels: dict[int, str] = field(default_factory=dict)
    header: list[str] | None = None

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cols(self) -> int:
        return len(self.rows[0]) if self.rows else 0

    def column(self, c: int) -> list[str]:
        return [r[c] for r in self.rows]


@dataclass
class TableCorpus:
    tables: list[Table]

    def __len__(self) -> int:
        return len(self.tables)

    def __iter__(self):
        return iter(self.tables)

    @property
    def label_set(self) -> list[str]:
        return sorted({lab for t in self.tables for lab in t.labels.values()})

    def by_id(self) -> dict[str, Table]:
        return {t.table_id: t for t in self.tables}

    def subset(self, ids) -> "TableCorpus":
        lookup = self.by_id()
        return TableCorpus([lookup[i] for i in ids])


def read_table(path: str | Path, table_id: str | None = None, has_header: bool = False) -> Table:
    path = Path(path)
    tid = table_id or path.stem
    try:
        with path.open(encoding="utf-8", newline="") as fh:
            rows = [r for r in csv.reader(fh)]
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise CorpusError(f"table {tid}: cannot read ({exc})") from None
    header = rows.pop(0) if has_header and rows else None
    if not rows:
        raise CorpusError(f"table {tid}: no data rows")
    width = len(rows[0])
    if width == 0 or any(len(r) != width for r in rows) or (header and len(header) != width):
        raise CorpusError(f"table {tid}: rows are not rectangular")
    return Table(tid, rows, header=header)


def read_labels(path: str | Path) -> dict[str, dict[int, str]]:
    out: dict[str, dict[int, str]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or (lineno == 1 and rec[:2] == ["table_id", "column"]):
                continue
            if len(rec) != 3:
                raise CorpusError(f"labels line {lineno}: expected table_id,column,label")
            tid, col, label = rec
            try:
                out.setdefault(tid, {})[int(col)] = label
            except ValueError:
                raise CorpusError(f"labels line {lineno}: bad column index {col!r}") from None
    return out


def read_corpus(tables_dir: str | Path, labels_path: str | Path | None = None, has_header: bool = False) -> TableCorpus:
    """Every ``*.csv`` under ``tables_dir`` (id = file stem), with a sidecar label file."""
    tables_dir = Path(tables_dir)
    if not tables_dir.is_dir():
        raise CorpusError(f"tables directory not found: {tables_dir}")
    tables = [read_table(p, has_header=has_header) for p in sorted(tables_dir.glob("*.csv"))]
    if labels_path is not None:
        labels = read_labels(labels_path)
        known = {t.table_id for t in tables}
        stray = sorted(set(labels) - known)
        if stray:
            raise CorpusError(f"labels reference unknown tables: {stray[:5]}")
        for t in tables:
            t.labels = labels.get(t.table_id, {})
            bad = [c for c in t.labels if not 0 <= c < t.n_cols]
            if bad:
                raise CorpusError(f"table {t.table_id}: label for missing column(s) {bad}")
    return TableCorpus(tables)


def write_corpus(corpus: TableCorpus, tables_dir: str | Path, labels_path: str | Path) -> None:
    tables_dir = Path(tables_dir)
    tables_dir.mkdir(parents=True, exist_ok=True)
    for t in corpus:
        with (tables_dir / f"{t.table_id}.csv").open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if t.header:
                w.writerow(t.header)
            w.writerows(t.rows)
    with open(labels_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["table_id", "column", "label"])
        for t in corpus:
            for c in sorted(t.labels):
                w.writerow([t.table_id, c, t.labels[c]])


# --- synthetic micro-corpus ----------------------------------------------------

ENTITY_CLASSES = ("athlete", "musician", "album", "film", "city")
NUMERIC_CLASSES = ("year", "population")
NOMATCH_CLASSES = ("code",)
CLASSES = ENTITY_CLASSES + NUMERIC_CLASSES + NOMATCH_CLASSES

# (shared type, class type, sub-types, predicate to the class/sub types)
_TYPES = {
    "athlete": ("human", "athlete", ("cricketer", "footballer", "tennis player"), "occupation"),
    "musician": ("human", "musician", ("guitarist", "singer", "drummer"), "occupation"),
    "album": ("creative work", "album", ("studio album", "live album"), "form of work"),
    "film": ("creative work", "film", ("feature film", "documentary film"), "form of work"),
    "city": ("settlement", "city", ("port city", "capital city"), "instance of"),
}
_RELATIONS = {
    ("athlete", "musician"): "collaborated with",
    ("athlete", "album"): "featured on",
    ("athlete", "film"): "appears in",
    ("athlete", "city"): "born in",
    ("musician", "album"): "performer of",
    ("musician", "film"): "composed score for",
    ("musician", "city"): "born in",
    ("album", "film"): "soundtrack of",
    ("album", "city"): "recorded in",
    ("film", "city"): "filmed in",
}
_CONS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"
_CODE_LETTERS = "BCDFGHJKLMNPQRSTVWXZ"


def _word_pool(rng: np.random.Generator, n: int, taken: set[str]) -> list[str]:
    out = []
    while len(out) < n:
        syl = int(rng.integers(2, 4))
        w = "".join(rng.choice(list(_CONS)) + rng.choice(list(_VOWELS)) for _ in range(syl))
        if rng.random() < 0.5:
            w += rng.choice(list(_CONS))
        if w not in taken:
            taken.add(w)
            out.append(w.capitalize())
    return out


def gen_micro_corpus(
    seed: int = 0,
    n_tables: int = 200,
    per_family: int = 40,
    min_rows: int = 5,
    max_rows: int = 30,
    min_cols: int = 2,
    max_cols: int = 4,
    links_per_pair: int = 2,
    homonym_rate: float = 0.1,
    n_person_decoys: int = 10,
    n_date_decoys: int = 10,
    n_distractors: int = 20,
    noise_rows: int = 0,
    kg_seed: int | None = None,
    short_mention_rate: float = 0.5,
) -> tuple[list[dict], TableCorpus]:
    """Deterministic synthetic KG records and labelled tables.

    Athletes and musicians share first/last-name tokens, albums and films
    share title words, so those pairs are only separable through KG types.
    ``code`` columns never match the KG; ``year``/``population`` are numeric.
    ``noise_rows`` junk rows (no KG match) are prepended to every table.
    ``short_mention_rate`` is the chance a two-word entity mention is written
    as its last word only (``"Kekilu Mohav"`` -> ``"Mohav"``).
    The KG depends only on ``kg_seed`` (default ``seed``), so corpora of
    different sizes can share one graph.
    """
    krng = np.random.default_rng(seed if kg_seed is None else kg_seed)
    taken: set[str] = set()
    first, last = _word_pool(krng, per_family, taken), _word_pool(krng, per_family, taken)
    adjs, nouns = _word_pool(krng, per_family, taken), _word_pool(krng, per_family, taken)
    places = _word_pool(krng, per_family, taken)
    place_suffix = _word_pool(krng, 6, taken)

    records: dict[str, dict] = {}

    def add(eid, label, aliases=()):
        records[eid] = {"id": eid, "label": label, "aliases": list(aliases), "edges": []}

    def link(src, pred, dst):
        edge = {"predicate": pred, "target": dst}
        if edge not in records[src]["edges"]:
            records[src]["edges"].append(edge)

    type_ids = {}
    for cls, (shared, main, subs, _) in _TYPES.items():
        for lab in (shared, main, *subs):
            if lab not in type_ids:
                type_ids[lab] = f"T{len(type_ids):03d}"
                add(type_ids[lab], lab)

    def names(pool_a, pool_b):
        pa, pb = krng.permutation(per_family), krng.permutation(per_family)
        return [f"{pool_a[pa[i]]} {pool_b[pb[i]]}" for i in range(per_family)]

    labels = {
        "athlete": names(first, last),
        "musician": names(first, last),
        "album": names(adjs, nouns),
        "film": names(adjs, nouns),
        "city": [
            (places[i] if krng.random() < 0.6 else f"{places[i]} {krng.choice(place_suffix)}")
            for i in krng.permutation(per_family)
        ],
    }
    for a, b in (("athlete", "musician"), ("album", "film")):
        for i in krng.choice(per_family, int(round(homonym_rate * per_family)), replace=False):
            labels[b][i] = labels[a][int(krng.integers(per_family))]

    members: dict[str, list[str]] = {}
    for ci, cls in enumerate(ENTITY_CLASSES):
        shared, main, subs, pred = _TYPES[cls]
        members[cls] = []
        for i in range(per_family):
            eid = f"E{ci}{i:03d}"
            add(eid, labels[cls][i])
            members[cls].append(eid)
            link(eid, "instance of", type_ids[shared])
            link(eid, pred, type_ids[main])
            link(eid, pred, type_ids[subs[int(krng.integers(len(subs)))]])

    for (fa, fb), pred in _RELATIONS.items():
        linked_b = set()
        for eid in members[fa]:
            for t in krng.choice(members[fb], links_per_pair, replace=False):
                link(eid, pred, str(t))
                linked_b.add(str(t))
        for t in members[fb]:
            if t not in linked_b:
                link(str(krng.choice(members[fa])), pred, t)

    persons = members["athlete"] + members["musician"]
    works = members["album"] + members["film"]
    decoy_people = names(first, last)[:n_person_decoys]
    for i, lab in enumerate(decoy_people):
        eid = f"P{i:03d}"
        add(eid, lab)
        for t in krng.choice(persons, 8, replace=False):
            link(str(t), "spouse", eid)
    for i in range(n_date_decoys):
        eid = f"D{i:03d}"
        y, m, d = int(krng.integers(1900, 2020)), int(krng.integers(1, 13)), int(krng.integers(1, 29))
        add(eid, f"{y:04d}-{m:02d}-{d:02d}")
        for t in krng.choice(persons + works, 8, replace=False):
            pred = "date of birth" if str(t) in persons else "publication date"
            link(str(t), pred, eid)
    org = "T900"
    add(org, "organization")
    for i in range(n_distractors):
        eid = f"X{i:03d}"
        kind = int(krng.integers(3))
        if kind == 0:
            lab = f"{krng.choice(last)} {krng.choice(['Stadium', 'Records', 'Trust'])}"
        elif kind == 1:
            lab = f"{krng.choice(first)} {krng.choice(last)} {krng.choice(['Band', 'Trio'])}"
        else:
            lab = f"The {krng.choice(adjs)} {krng.choice(nouns)} Show"
        add(eid, lab)
        link(eid, "instance of", org)

    kg_records = [records[k] for k in sorted(records)]
    adjacency: dict[str, dict[str, list[str]]] = {e: {} for e in records}
    for rec in kg_records:
        for edge in rec["edges"]:
            src, dst = rec["id"], edge["target"]
            adjacency[src].setdefault(dst[:2], []).append(dst)
            adjacency[dst].setdefault(src[:2], []).append(src)
    family_prefix = {cls: f"E{ci}" for ci, cls in enumerate(ENTITY_CLASSES)}

    # tables -------------------------------------------------------------
    rng = np.random.default_rng(seed)
    codes = ["".join(rng.choice(list(_CODE_LETTERS), 3)) for _ in range(60)]
    label_of = {eid: records[eid]["label"] for eid in records}
    tables = []
    for ti in range(n_tables):
        n_cols = int(rng.integers(min_cols, max_cols + 1))
        classes = [str(c) for c in rng.choice(CLASSES, n_cols, replace=False)]
        n_rows = int(rng.integers(min_rows, max_rows + 1))
        rows = []
        for _ in range(n_rows):
            anchor = None
            row = []
            for c, cls in enumerate(classes):
                if cls in ENTITY_CLASSES:
                    if anchor is None:
                        anchor = str(rng.choice(members[cls]))
                        eid = anchor
                    else:
                        nbrs = adjacency[anchor].get(family_prefix[cls], [])
                        eid = str(rng.choice(sorted(set(nbrs)))) if nbrs else str(rng.choice(members[cls]))
                    mention = label_of[eid]
                    if " " in mention and rng.random() < short_mention_rate:
                        mention = mention.rsplit(" ", 1)[1]
                    row.append(mention)
                elif cls == "year":
                    row.append(str(int(rng.integers(1900, 2024))))
                elif cls == "population":
                    row.append(f"{int(np.exp(rng.uniform(np.log(1e4), np.log(5e6)))):,}")
                else:
                    row.append(str(rng.choice(codes)))
            rows.append(row)
        for _ in range(noise_rows):
            row = []
            for c, cls in enumerate(classes):
                if cls in ENTITY_CLASSES:
                    row.append("".join(rng.choice(list(_CODE_LETTERS.lower()), 5)))
                elif cls == "year":
                    row.append(str(int(rng.integers(1900, 2024))))
                elif cls == "population":
                    row.append(f"{int(np.exp(rng.uniform(np.log(1e4), np.log(5e6)))):,}")
                else:
                    row.append(str(rng.choice(codes)))
            rows.insert(0, row)
        tables.append(Table(f"t{ti:04d}", rows, {c: cls for c, cls in enumerate(classes)}))
    return kg_records, TableCorpus(tables)


def write_kg(records: list[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")


def write_micro_corpus(out_dir: str | Path, **knobs) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, corpus = gen_micro_corpus(**knobs)
    paths = {"kg": out_dir / "kg.jsonl", "tables": out_dir / "tables", "labels": out_dir / "labels.csv"}
    write_kg(records, paths["kg"])
    write_corpus(corpus, paths["tables"], paths["labels"])
    return paths
