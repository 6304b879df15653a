"""Hot inner loops for linking and candidate-type scoring.

Each kernel has two implementations with identical results: a numba
``@njit`` loop and a vectorised numpy path. Setting ``KGCTA_NO_NUMBA=1``
(or running without numba installed) selects the numpy path at import time.
``benchmarks/bench_kernels.py`` times both.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn


USE_NUMBA = HAVE_NUMBA and os.environ.get("KGCTA_NO_NUMBA", "").lower() not in ("1", "true", "yes")


# --- BM25 accumulation over a CSR inverted index -----------------------------


@njit(cache=True)
def _bm25_scores_loop(q_tokens, idf, indptr, post_docs, post_tf, doc_len, avgwl, k1, b):
    n_docs = doc_len.shape[0]
    out = np.zeros(n_docs, dtype=np.float64)
    for qi in range(q_tokens.shape[0]):
        t = q_tokens[qi]
        w = idf[t]
        for p in range(indptr[t], indptr[t + 1]):
            d = post_docs[p]
            f = post_tf[p]
            out[d] += w * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * doc_len[d] / avgwl))
    return out


def _bm25_scores_numpy(q_tokens, idf, indptr, post_docs, post_tf, doc_len, avgwl, k1, b):
    out = np.zeros(doc_len.shape[0], dtype=np.float64)
    if q_tokens.size == 0:
        return out
    starts, stops = indptr[q_tokens], indptr[q_tokens + 1]
    lens = stops - starts
    # flat posting positions for every query token (duplicates kept)
    pos = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(lens.sum())
    w = np.repeat(idf[q_tokens], lens)
    d = post_docs[pos]
    f = post_tf[pos].astype(np.float64)
    contrib = w * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * doc_len[d] / avgwl))
    # sequential accumulation in query order keeps float sums identical to the loop
    np.add.at(out, d, contrib)
    return out


# --- per-row overlap counts ---------------------------------------------------


@njit(cache=True)
def _overlap_counts_loop(cands, col_ptr, adj_indptr, adj_indices, n_entities):
    n_col = col_ptr.shape[0] - 1
    out = np.zeros(cands.shape[0], dtype=np.int64)
    stamp = np.full(n_entities, -1, dtype=np.int64)
    for c2 in range(n_col):
        for i in range(col_ptr[c2], col_ptr[c2 + 1]):
            e = cands[i]
            for p in range(adj_indptr[e], adj_indptr[e + 1]):
                stamp[adj_indices[p]] = c2
        for c1 in range(n_col):
            if c1 == c2:
                continue
            for i in range(col_ptr[c1], col_ptr[c1 + 1]):
                if stamp[cands[i]] == c2:
                    out[i] += 1
    return out


def _overlap_counts_numpy(cands, col_ptr, adj_indptr, adj_indices, n_entities):
    out = np.zeros(cands.shape[0], dtype=np.int64)
    col_of = np.repeat(np.arange(col_ptr.shape[0] - 1), np.diff(col_ptr))
    for c2 in range(col_ptr.shape[0] - 1):
        own = cands[col_ptr[c2] : col_ptr[c2 + 1]]
        if own.size == 0:
            continue
        parts = [adj_indices[adj_indptr[e] : adj_indptr[e + 1]] for e in own]
        nbrs = np.unique(np.concatenate(parts))
        out += np.isin(cands, nbrs) & (col_of != c2)
    return out


# --- candidate type scores for one column ------------------------------------


@njit(cache=True)
def _type_scores_loop(ents, row_ptr, os_vals, adj_indptr, adj_indices, allowed):
    n_entities = allowed.shape[0]
    support = np.zeros(n_entities, dtype=np.int64)
    nominating_rows = np.zeros(n_entities, dtype=np.int64)
    stamp = np.full(n_entities, -1, dtype=np.int64)
    for r in range(row_ptr.shape[0] - 1):
        for i in range(row_ptr[r], row_ptr[r + 1]):
            e = ents[i]
            for p in range(adj_indptr[e], adj_indptr[e + 1]):
                ct = adj_indices[p]
                if not allowed[ct]:
                    continue
                support[ct] += os_vals[i]
                if stamp[ct] != r:
                    stamp[ct] = r
                    nominating_rows[ct] += 1
    return np.maximum(nominating_rows - 1, 0) * support


def _type_scores_numpy(ents, row_ptr, os_vals, adj_indptr, adj_indices, allowed):
    n_entities = allowed.shape[0]
    support = np.zeros(n_entities, dtype=np.int64)
    nominating_rows = np.zeros(n_entities, dtype=np.int64)
    lens = adj_indptr[ents + 1] - adj_indptr[ents]
    if lens.sum() == 0:
        return support
    pos = np.repeat(adj_indptr[ents] - np.cumsum(lens) + lens, lens) + np.arange(lens.sum())
    ct = adj_indices[pos]
    w = np.repeat(os_vals, lens)
    row = np.repeat(np.repeat(np.arange(row_ptr.shape[0] - 1), np.diff(row_ptr)), lens)
    keep = allowed[ct]
    ct, w, row = ct[keep], w[keep], row[keep]
    np.add.at(support, ct, w)
    pairs = np.unique(row * n_entities + ct)
    np.add.at(nominating_rows, pairs % n_entities, 1)
    return np.maximum(nominating_rows - 1, 0) * support


if USE_NUMBA:
    bm25_scores = _bm25_scores_loop
    overlap_counts = _overlap_counts_loop
    type_scores = _type_scores_loop
else:
    bm25_scores = _bm25_scores_numpy
    overlap_counts = _overlap_counts_numpy
    type_scores = _type_scores_numpy

IMPLEMENTATIONS = {
    "numba": (_bm25_scores_loop, _overlap_counts_loop, _type_scores_loop),
    "numpy": (_bm25_scores_numpy, _overlap_counts_numpy, _type_scores_numpy),
}
