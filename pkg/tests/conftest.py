from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
import pytest

from kgcta.index import build_index
from kgcta.kg_store import Edge, Entity, build_kg, load_kg

FIXTURES = Path(__file__).parent / "fixtures"
FIXTURE_KG = FIXTURES / "fixture_kg.jsonl"

WORDS = ["rust", "steele", "peter", "album", "river", "stone", "iron", "blue", "night", "king",
         "queen", "north", "gold", "silver", "red", "city", "lake", "field", "star", "wolf"]


def fixture_records() -> list[dict]:
    with open(FIXTURE_KG, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def kg_from_records(records):
    ents = [Entity(r["id"], r["label"], tuple(r.get("aliases", []))) for r in records]
    edges = [Edge(r["id"], e["predicate"], e["target"]) for r in records for e in r.get("edges", [])]
    return build_kg(ents, edges)


def random_records(seed: int, n_entities: int = 120, n_edges: int = 360,
                   capital_rate: float = 0.2) -> list[dict]:
    """Random graph over a small word pool so tokens, ties and neighborhoods overlap heavily."""
    rng = np.random.default_rng(seed)
    recs = []
    for i in range(n_entities):
        n = int(rng.integers(1, 4))
        words = [str(w) for w in rng.choice(WORDS, n)]
        if rng.random() < capital_rate:
            words = [w.capitalize() for w in words]
        aliases = [" ".join(rng.choice(WORDS, int(rng.integers(1, 3)))) for _ in range(int(rng.integers(0, 2)))]
        recs.append({"id": f"Q{i:03d}", "label": " ".join(words), "aliases": aliases, "edges": []})
    for _ in range(n_edges):
        a, b = (int(x) for x in rng.integers(0, n_entities, 2))
        if a != b:
            recs[a]["edges"].append({"predicate": str(rng.choice(["p", "q", "r"])), "target": f"Q{b:03d}"})
    return recs


def random_mentions(seed: int, n: int = 240) -> list[str]:
    rng = np.random.default_rng(seed + 10_000)
    out = []
    for _ in range(n):
        k = int(rng.integers(1, 4))
        out.append(" ".join(str(w) for w in rng.choice(WORDS + ["zzz", "qqq"], k)))
    return out


@pytest.fixture(scope="session")
def fixture_kg():
    return load_kg(FIXTURE_KG)


@pytest.fixture(scope="session")
def fixture_index(fixture_kg):
    return build_index(fixture_kg)


@pytest.fixture(scope="session")
def random_world():
    recs = random_records(7)
    kg = kg_from_records(recs)
    return recs, kg, build_index(kg)


@pytest.fixture(scope="session")
def micro_world():
    """A 30-table generated corpus, annotated, with vocabulary and label index."""
    from kgcta.corpus import gen_micro_corpus
    from kgcta.evaluation import vocabulary_for
    from kgcta.pipeline import annotate_corpus

    records, corpus = gen_micro_corpus(seed=0, n_tables=30, max_rows=10)
    kg = kg_from_records(records)
    index = build_index(kg)
    annotated = annotate_corpus(corpus, kg, index)
    label_set = corpus.label_set
    vocab = vocabulary_for(annotated, corpus, kg, label_set)
    return {"kg": kg, "index": index, "corpus": corpus, "annotated": annotated,
            "labels": label_set, "label_index": {l: i for i, l in enumerate(label_set)},
            "vocab": vocab}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = mod.summary_lines() if mod is not None else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
