"""Knowledge-graph store: entity records, undirected one-hop adjacency."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

log = logging.getLogger(__name__)


class KGError(Exception):
    pass


class KGParseError(KGError, ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


class KGValidationError(KGError, ValueError):
    pass


class EntityNotFound(KGError, KeyError):
    def __str__(self) -> str:
        return f"unknown entity id: {self.args[0]!r}"


@dataclass(frozen=True)
class Entity:
    id: str
    label: str
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class Edge:
    source: str
    predicate: str
    target: str


@dataclass
class KnowledgeGraph:
    """Immutable-after-load graph.

    ``adjacency`` maps an entity id to its sorted, deduplicated
    ``(predicate, neighbor id)`` pairs; every stored edge appears under both
    endpoints. The integer CSR view (``adj_indptr``/``adj_indices``) holds the
    unique neighbor indices per entity and feeds the numeric kernels.
    """

    entities: dict[str, Entity]
    adjacency: dict[str, list[tuple[str, str]]]
    edge_count: int = 0
    ids: list[str] = field(init=False)
    index_of: dict[str, int] = field(init=False)
    adj_indptr: np.ndarray = field(init=False, repr=False)
    adj_indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.ids = sorted(self.entities)
        self.index_of = {eid: i for i, eid in enumerate(self.ids)}
        indptr = np.zeros(len(self.ids) + 1, dtype=np.int64)
        chunks = []
        for i, eid in enumerate(self.ids):
            nbrs = sorted({self.index_of[t] for _, t in self.adjacency.get(eid, ())})
            chunks.append(nbrs)
            indptr[i + 1] = indptr[i] + len(nbrs)
        self.adj_indptr = indptr
        self.adj_indices = np.fromiter(
            (n for c in chunks for n in c), dtype=np.int64, count=int(indptr[-1])
        )

    def __len__(self) -> int:
        return len(self.entities)

    def entity(self, eid: str) -> Entity:
        try:
            return self.entities[eid]
        except KeyError:
            raise EntityNotFound(eid) from None

    def neighbor_ids(self, eid: str) -> set[str]:
        if eid not in self.entities:
            raise EntityNotFound(eid)
        return {t for _, t in self.adjacency.get(eid, ())}


def _parse_line(lineno: int, line: str) -> tuple[Entity, list[tuple[str, str]]]:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise KGParseError(lineno, f"invalid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise KGParseError(lineno, "record must be a JSON object")
    eid, label = rec.get("id"), rec.get("label")
    if not isinstance(eid, str) or not eid:
        raise KGParseError(lineno, "'id' must be a non-empty string")
    if not isinstance(label, str) or not label:
        raise KGParseError(lineno, "'label' must be a non-empty string")
    aliases = rec.get("aliases", [])
    if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
        raise KGParseError(lineno, "'aliases' must be a list of strings")
    edges = rec.get("edges", [])
    if not isinstance(edges, list):
        raise KGParseError(lineno, "'edges' must be a list")
    out = []
    for e in edges:
        if (
            not isinstance(e, dict)
            or not isinstance(e.get("predicate"), str)
            or not e["predicate"]
            or not isinstance(e.get("target"), str)
            or not e["target"]
        ):
            raise KGParseError(lineno, "each edge needs non-empty 'predicate' and 'target'")
        out.append((e["predicate"], e["target"]))
    return Entity(eid, label, tuple(aliases)), out


def build_kg(entities: Iterable[Entity], edges: Iterable[Edge]) -> KnowledgeGraph:
    ents: dict[str, Entity] = {}
    for ent in entities:
        if ent.id in ents:
            raise KGValidationError(f"duplicate entity id: {ent.id!r}")
        ents[ent.id] = ent
    dangling = []
    adj: dict[str, set[tuple[str, str]]] = {eid: set() for eid in ents}
    seen_edges = set()
    for edge in edges:
        if edge.source not in ents or edge.target not in ents:
            dangling.append(edge)
            continue
        if edge.source == edge.target:
            log.warning("dropping self-loop %s -%s-> %s", edge.source, edge.predicate, edge.target)
            continue
        seen_edges.add((edge.source, edge.predicate, edge.target))
        adj[edge.source].add((edge.predicate, edge.target))
        adj[edge.target].add((edge.predicate, edge.source))
    if dangling:
        listing = ", ".join(f"{e.source}-{e.predicate}->{e.target}" for e in dangling[:20])
        raise KGValidationError(f"{len(dangling)} dangling edge(s): {listing}")
    adjacency = {eid: sorted(pairs) for eid, pairs in adj.items()}
    return KnowledgeGraph(ents, adjacency, edge_count=len(seen_edges))


def load_kg(path: str | Path) -> KnowledgeGraph:
    """Load a line-delimited JSON graph file.

    Each non-blank line is ``{"id", "label", "aliases": [...],
    "edges": [{"predicate", "target"}, ...]}``; edges are stored on the source
    record and may reference entities defined later in the file.
    """
    path = Path(path)
    entities, edges = [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            ent, ent_edges = _parse_line(lineno, line)
            entities.append(ent)
            edges.extend(Edge(ent.id, p, t) for p, t in ent_edges)
    return build_kg(entities, edges)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def neighbors(kg: KnowledgeGraph, eid: str) -> list[tuple[str, Entity]]:
    """One-hop neighbors in both edge directions, sorted by (predicate, id)."""
    if eid not in kg.entities:
        raise EntityNotFound(eid)
    return [(p, kg.entities[t]) for p, t in kg.adjacency.get(eid, ())]


def one_hop_set(kg: KnowledgeGraph, ids: Iterable[str]) -> set[str]:
    out: set[str] = set()
    for eid in ids:
        out |= kg.neighbor_ids(eid)
    return out
