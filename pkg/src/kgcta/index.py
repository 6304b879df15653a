"""Tokenizer, inverted index over entity surface forms, BM25 scoring."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .kg_store import EntityNotFound, KnowledgeGraph

log = logging.getLogger(__name__)

INDEX_FORMAT = "kgcta-index"
INDEX_VERSION = 1

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every run of non-alphanumeric characters."""
    return _TOKEN_RE.findall(text.lower())


@dataclass
class InvertedIndex:
    postings: dict[str, list[tuple[str, int]]]
    doc_len: dict[str, int]
    k1: float = 1.2
    b: float = 0.75
    N: int = field(init=False)
    avgwl: float = field(init=False)
    # integer views for the scoring kernel
    doc_ids: list[str] = field(init=False, repr=False)
    token_ids: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.N = len(self.doc_len)
        self.avgwl = sum(self.doc_len.values()) / self.N if self.N else 0.0
        self.doc_ids = sorted(self.doc_len)
        doc_pos = {d: i for i, d in enumerate(self.doc_ids)}
        vocab = sorted(self.postings)
        self.token_ids = {t: i for i, t in enumerate(vocab)}
        indptr = np.zeros(len(vocab) + 1, dtype=np.int64)
        docs, tfs = [], []
        for i, tok in enumerate(vocab):
            plist = self.postings[tok]
            indptr[i + 1] = indptr[i] + len(plist)
            docs.extend(doc_pos[d] for d, _ in plist)
            tfs.extend(tf for _, tf in plist)
        self._indptr = indptr
        self._post_docs = np.asarray(docs, dtype=np.int64)
        self._post_tf = np.asarray(tfs, dtype=np.int64)
        self._doc_len = np.asarray([self.doc_len[d] for d in self.doc_ids], dtype=np.float64)
        self._idf = np.asarray([idf(self, t) for t in vocab], dtype=np.float64)

    def doc_freq(self, word: str) -> int:
        return len(self.postings.get(word, ()))

    def token_count(self) -> int:
        return len(self.postings)


def build_index(kg: KnowledgeGraph, k1: float = 1.2, b: float = 0.75) -> InvertedIndex:
    """One document per entity: label tokens followed by every alias's tokens."""
    if k1 < 0 or not 0 <= b <= 1:
        raise ValueError(f"BM25 parameters out of range: k1={k1}, b={b}")
    if len(kg) == 0:
        raise ValueError("cannot index an empty knowledge graph")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_len: dict[str, int] = {}
    for eid in kg.ids:
        ent = kg.entities[eid]
        toks = tokenize(ent.label)
        for alias in ent.aliases:
            toks.extend(tokenize(alias))
        if not toks:
            log.warning("entity %s has no indexable tokens; skipped", eid)
            continue
        doc_len[eid] = len(toks)
        for tok, tf in sorted(Counter(toks).items()):
            postings.setdefault(tok, []).append((eid, tf))
    return InvertedIndex(postings, doc_len, k1, b)


def idf(index: InvertedIndex, word: str) -> float:
    n = index.doc_freq(word)
    return math.log((index.N - n + 0.5) / (n + 0.5) + 1.0)


def bm25_score(index: InvertedIndex, query: list[str], eid: str) -> float:
    if eid not in index.doc_len:
        raise EntityNotFound(eid)
    length = index.doc_len[eid]
    norm = index.k1 * (1.0 - index.b + index.b * length / index.avgwl)
    score = 0.0
    for w in query:
        f = next((tf for d, tf in index.postings.get(w, ()) if d == eid), 0)
        if f:
            score += idf(index, w) * f * (index.k1 + 1.0) / (f + norm)
    return score


def search(index: InvertedIndex, mention: str, top_n: int = 10) -> list[tuple[str, float]]:
    """Entities with positive BM25 score, best first, ties by id."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    q = np.asarray(
        [index.token_ids[t] for t in tokenize(mention) if t in index.token_ids], dtype=np.int64
    )
    if q.size == 0:
        return []
    scores = kernels.bm25_scores(
        q, index._idf, index._indptr, index._post_docs, index._post_tf,
        index._doc_len, index.avgwl, index.k1, index.b,
    )
    hits = np.nonzero(scores > 0)[0]
    # doc_ids is sorted, so index order is id order for the tie-break
    order = hits[np.lexsort((hits, -scores[hits]))][:top_n]
    return [(index.doc_ids[i], float(scores[i])) for i in order]


def save_index(index: InvertedIndex, path: str | Path, kg_sha256: str) -> None:
    header = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "kg_sha256": kg_sha256,
        "k1": index.k1,
        "b": index.b,
        "N": index.N,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        fh.write(json.dumps({"doc_len": index.doc_len}, sort_keys=True) + "\n")
        for tok in sorted(index.postings):
            fh.write(json.dumps([tok, index.postings[tok]], ensure_ascii=False) + "\n")


def load_index(path: str | Path, kg_sha256: str | None = None) -> InvertedIndex | None:
    """Read a cached index; ``None`` if the cache is stale or from another version."""
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != INDEX_FORMAT or header.get("version") != INDEX_VERSION:
            return None
        if kg_sha256 is not None and header.get("kg_sha256") != kg_sha256:
            return None
        doc_len = json.loads(fh.readline())["doc_len"]
        postings = {}
        for line in fh:
            tok, plist = json.loads(line)
            postings[tok] = [(d, tf) for d, tf in plist]
    return InvertedIndex(postings, doc_len, header["k1"], header["b"])
