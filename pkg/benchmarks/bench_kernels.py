"""Time the numba and numpy kernel paths on generated data.

    python benchmarks/bench_kernels.py [--tables 200] [--repeat 5]

Reports per-kernel microseconds per call and end-to-end annotation time for
each path. Both paths are checked for identical outputs before timing.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from kgcta import kernels
from kgcta.corpus import gen_micro_corpus
from kgcta.index import build_index, tokenize
from kgcta.kg_store import Edge, Entity, build_kg
from kgcta.pipeline import annotate_corpus


def build_world(n_tables: int):
    records, corpus = gen_micro_corpus(seed=0, n_tables=n_tables)
    kg = build_kg(
        [Entity(r["id"], r["label"], tuple(r["aliases"])) for r in records],
        [Edge(r["id"], e["predicate"], e["target"]) for r in records for e in r["edges"]],
    )
    return kg, build_index(kg), corpus


def kernel_inputs(kg, index, corpus, rng):
    queries = []
    for t in corpus.tables[:50]:
        for row in t.rows:
            ids = [index.token_ids[w] for m in row for w in tokenize(m) if w in index.token_ids]
            if ids:
                queries.append(np.asarray(ids[:3], dtype=np.int64))
    bm25 = [(q, index._idf, index._indptr, index._post_docs, index._post_tf,
             index._doc_len, index.avgwl, index.k1, index.b) for q in queries]
    overlap, types = [], []
    for _ in range(len(queries)):
        sizes = rng.integers(1, 8, 4)
        cands = rng.choice(len(kg), sizes.sum()).astype(np.int64)
        ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        overlap.append((cands, ptr, kg.adj_indptr, kg.adj_indices, len(kg)))
        os_vals = rng.integers(1, 4, cands.size).astype(np.int64)
        allowed = np.ones(len(kg), dtype=np.bool_)
        types.append((cands, ptr, os_vals, kg.adj_indptr, kg.adj_indices, allowed))
    return {"bm25_scores": bm25, "overlap_counts": overlap, "type_scores": types}


def time_calls(fn, inputs, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        for args in inputs:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best / len(inputs) * 1e6


def use(path):
    bm25, overlap, types = kernels.IMPLEMENTATIONS[path]
    kernels.bm25_scores, kernels.overlap_counts, kernels.type_scores = bm25, overlap, types


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tables", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    kg, index, corpus = build_world(args.tables)
    inputs = kernel_inputs(kg, index, corpus, np.random.default_rng(0))
    names = list(inputs)
    impls = kernels.IMPLEMENTATIONS
    if not kernels.HAVE_NUMBA:
        print("numba not installed; the numba column runs the plain python loops")

    for i, name in enumerate(names):
        for args_ in inputs[name][:20]:
            a, b = impls["numba"][i](*args_), impls["numpy"][i](*args_)
            if not np.allclose(a, b, rtol=1e-12, atol=0):
                raise SystemExit(f"{name}: paths disagree")

    print(f"{'kernel':<16}{'calls':>8}{'numba us':>12}{'numpy us':>12}{'ratio':>8}")
    for i, name in enumerate(names):
        t_nb = time_calls(impls["numba"][i], inputs[name], args.repeat)
        t_np = time_calls(impls["numpy"][i], inputs[name], args.repeat)
        print(f"{name:<16}{len(inputs[name]):>8}{t_nb:>12.1f}{t_np:>12.1f}{t_np / t_nb:>8.2f}")

    original = (kernels.bm25_scores, kernels.overlap_counts, kernels.type_scores)
    results = {}
    try:
        for path in ("numba", "numpy"):
            use(path)
            best = float("inf")
            for _ in range(max(1, args.repeat // 2)):
                t0 = time.perf_counter()
                out = annotate_corpus(corpus, kg, index)
                best = min(best, time.perf_counter() - t0)
            results[path] = (best, out)
    finally:
        kernels.bm25_scores, kernels.overlap_counts, kernels.type_scores = original
    same = results["numba"][1] == results["numpy"][1]
    print(f"annotate {len(corpus)} tables: numba {results['numba'][0]:.2f}s  "
          f"numpy {results['numpy'][0]:.2f}s  identical={same}")


if __name__ == "__main__":
    main()
