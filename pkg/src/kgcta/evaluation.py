"""Splits, column-level metrics, and end-to-end experiment drivers."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .config import ABLATIONS, Config
from .corpus import TableCorpus
from .index import InvertedIndex
from .kg_store import KnowledgeGraph
from .pipeline import annotate_corpus
from .serialization import AnnotatedTable, build_vocabulary, prefix_text
from .trainer import Example, TrainResult, predict, prepare_example, train

log = logging.getLogger(__name__)


@dataclass
class Split:
    train: list[str]
    validation: list[str]
    test: list[str]

    def to_dict(self) -> dict:
        return {"train": self.train, "validation": self.validation, "test": self.test}


def stratified_split(corpus: TableCorpus, seed: int = 0,
                     ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)) -> Split:
    """Table-level split stratified on each table's first labelled column."""
    if len(corpus) == 0:
        raise ValueError("cannot split an empty corpus")
    if abs(sum(ratios) - 1) > 1e-9:
        raise ValueError("ratios must sum to 1")
    by_class: dict[str, list[str]] = {}
    for t in corpus:
        key = t.labels[min(t.labels)] if t.labels else ""
        by_class.setdefault(key, []).append(t.table_id)
    rng = np.random.default_rng(seed)
    out = Split([], [], [])
    for key in sorted(by_class):
        ids = sorted(by_class[key])
        if len(ids) < 3:
            warnings.warn(f"class {key!r} has {len(ids)} table(s); all assigned to train")
            out.train.extend(ids)
            continue
        ids = [ids[i] for i in rng.permutation(len(ids))]
        # largest-remainder rounding keeps the three sizes summing to len(ids)
        raw = np.asarray(ratios) * len(ids)
        sizes = np.floor(raw).astype(int)
        for i in np.argsort(-(raw - sizes), kind="stable")[: len(ids) - sizes.sum()]:
            sizes[i] += 1
        out.train.extend(ids[: sizes[0]])
        out.validation.extend(ids[sizes[0] : sizes[0] + sizes[1]])
        out.test.extend(ids[sizes[0] + sizes[1] :])
    for part in (out.train, out.validation, out.test):
        part.sort()
    return out


def accuracy(preds, gts) -> float:
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise ValueError("prediction/ground-truth length mismatch")
    if not preds:
        raise ValueError("no predictions")
    return sum(p == g for p, g in zip(preds, gts)) / len(preds)


def per_class_scores(preds, gts, labels) -> dict:
    preds, gts = np.asarray(list(preds)), np.asarray(list(gts))
    out = {}
    for lab in labels:
        tp = int(np.sum((preds == lab) & (gts == lab)))
        fp = int(np.sum((preds == lab) & (gts != lab)))
        fn = int(np.sum((preds != lab) & (gts == lab)))
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        out[lab] = {"precision": prec, "recall": rec, "f1": f1, "support": tp + fn}
    return out


def weighted_f1(preds, gts, labels) -> float:
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts):
        raise ValueError("prediction/ground-truth length mismatch")
    if not preds:
        raise ValueError("no predictions")
    scores = per_class_scores(preds, gts, labels)
    return sum(s["f1"] * s["support"] for s in scores.values()) / len(gts)


def metrics_report(preds, gts, labels) -> dict:
    preds, gts = list(preds), list(gts)
    confusion: dict[str, dict[str, int]] = {}
    for p, g in zip(preds, gts):
        row = confusion.setdefault(str(g), {})
        row[str(p)] = row.get(str(p), 0) + 1
    return {
        "accuracy": accuracy(preds, gts),
        "weighted_f1": weighted_f1(preds, gts, labels),
        "n_columns": len(gts),
        "per_class": per_class_scores(preds, gts, labels),
        "confusion": confusion,
    }


def evaluate_examples(preds, examples: list[Example]) -> dict:
    labels = [l for ex in examples for l in ex.labels]
    p = [x.label_id for x in preds]
    label_ids = sorted(set(labels) | set(p))
    return {"accuracy": accuracy(p, labels), "weighted_f1": weighted_f1(p, labels, label_ids)}


# --- experiment driver ----------------------------------------------------------------


@dataclass
class ExperimentResult:
    config: Config
    split: Split
    label_set: list[str]
    vocab: object
    train_result: TrainResult
    test_metrics: dict
    column_records: list[dict] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "accuracy": self.test_metrics["accuracy"],
            "weighted_f1": self.test_metrics["weighted_f1"],
            "best_epoch": self.train_result.best_epoch,
            "epochs_run": len(self.train_result.history),
        }


def vocabulary_for(train_tables: list[AnnotatedTable], raw: TableCorpus, kg: KnowledgeGraph,
                   label_set: list[str]):
    extra = list(label_set)
    for t in train_tables:
        extra.extend(s for s in (prefix_text(cc) for cc in t.candidates) if s)
    return build_vocabulary((t.rows for t in raw), kg, extra)


def run_experiment(corpus: TableCorpus, kg: KnowledgeGraph, index: InvertedIndex, cfg: Config,
                   annotated: list[AnnotatedTable] | None = None) -> ExperimentResult:
    if annotated is None:
        annotated = annotate_corpus(corpus, kg, index, cfg.workers, **cfg.annotator_knobs())
    by_id = {a.table_id: a for a in annotated}
    split = stratified_split(corpus, cfg.split_seed, cfg.ratios)
    train_raw = corpus.subset(split.train)
    label_set = train_raw.label_set
    label_index = {lab: i for i, lab in enumerate(label_set)}
    train_ann = [by_id[i] for i in split.train]
    vocab = vocabulary_for(train_ann, train_raw, kg, label_set)
    prep = lambda ids, gt: [prepare_example(by_id[i], vocab, label_index, cfg, gt) for i in ids]
    train_ex, val_ex, test_ex = prep(split.train, True), prep(split.validation, False), prep(split.test, False)
    unknown = sum(l < 0 for ex in test_ex for l in ex.labels)
    if unknown:
        log.warning("%d test column(s) carry labels unseen in training; counted as wrong", unknown)
    result = train(train_ex, val_ex, cfg, len(vocab), label_set, evaluate_examples)
    preds = predict(result.model, test_ex, cfg, label_set)
    gts = [l for ex in test_ex for l in ex.labels]
    metrics = metrics_report([p.label_id for p in preds], gts, list(range(len(label_set))))
    records = []
    k = 0
    for ex in test_ex:
        for c, gt, linked in zip(ex.columns, ex.labels, ex.linked):
            p = preds[k]
            records.append({"table_id": ex.table_id, "column": c, "gt": gt, "pred": p.label_id,
                            "linked": linked})
            k += 1
    return ExperimentResult(cfg, split, label_set, vocab, result, metrics, records)


def run_ablation(corpus: TableCorpus, kg: KnowledgeGraph, index: InvertedIndex, base: Config,
                 variants: list[str], seeds: list[int] | None = None) -> list[dict]:
    """Train and test each named variant on shared annotations, splits and seeds."""
    seeds = seeds or [base.seed]
    annotated = annotate_corpus(corpus, kg, index, base.workers, **base.annotator_knobs())
    rows = []
    for name in variants:
        if name not in ABLATIONS:
            raise ValueError(f"unknown variant {name!r}; choose from {sorted(ABLATIONS)}")
        runs = [run_experiment(corpus, kg, index, base.replace(seed=s, **ABLATIONS[name]), annotated)
                for s in seeds]
        rows.append(_row(name, runs, seeds))
    return rows


def _row(name, runs, seeds) -> dict:
    return {
        "variant": name,
        "seeds": list(seeds),
        "accuracy": float(np.mean([r.test_metrics["accuracy"] for r in runs])),
        "weighted_f1": float(np.mean([r.test_metrics["weighted_f1"] for r in runs])),
        "per_seed": [r.summary() for r in runs],
    }


def compare_row_filters(corpus: TableCorpus, kg: KnowledgeGraph, index: InvertedIndex, base: Config,
                        k_values: list[int], seeds: list[int] | None = None) -> list[dict]:
    """Score-sorted vs original-order top-k rows, for each k; includes wall-clock."""
    seeds = seeds or [base.seed]
    rows = []
    for k in k_values:
        for mode in ("score", "original"):
            cfg = base.replace(k=k, row_filter=mode)
            t0 = time.perf_counter()
            annotated = annotate_corpus(corpus, kg, index, cfg.workers, **cfg.annotator_knobs())
            runs = [run_experiment(corpus, kg, index, cfg.replace(seed=s), annotated) for s in seeds]
            row = _row(f"{mode}-top-{k}", runs, seeds)
            row.update({"k": k, "filter": mode, "seconds": time.perf_counter() - t0})
            rows.append(row)
    return rows


def format_table(rows: list[dict], keys=("variant", "accuracy", "weighted_f1")) -> str:
    widths = [max(len(k), *(len(_fmt(r.get(k))) for r in rows)) for k in keys]
    lines = ["  ".join(k.ljust(w) for k, w in zip(keys, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in rows:
        lines.append("  ".join(_fmt(r.get(k)).ljust(w) for k, w in zip(keys, widths)))
    return "\n".join(lines)


def _fmt(v) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)
