"""``kgcta`` command line: index, annotate, train, eval, ablate, filters, gen-corpus."""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
import time
from pathlib import Path

from .config import ABLATIONS, Config
from .corpus import CorpusError, read_corpus, write_micro_corpus
from .index import build_index, load_index, save_index
from .kg_store import KGError, file_sha256, load_kg
from .pipeline import annotate_corpus
from .serialization import PLAIN, build_vocabulary, prefix_text, serialize_table

log = logging.getLogger("kgcta")

INDEX_FILE = "index.jsonl"
KG_FILE = "kg.jsonl"
CONFIG_FILE = "config.json"
CHECKPOINT_FILE = "checkpoint.pt"
FAILED_FILE = "FAILED"


class CLIError(Exception):
    pass


# --- helpers ----------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_jsonl(path: Path, records) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _config(args) -> Config:
    data = Config.load(args.config).to_dict() if getattr(args, "config", None) else {}
    for key in ("kg", "tables", "labels", "out", "seed", "workers", "epochs"):
        v = getattr(args, key, None)
        if v is not None:
            data[key] = str(v) if key in ("kg", "tables", "labels", "out") else v
    if getattr(args, "has_header", False):
        data["has_header"] = True
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise CLIError(f"--set expects KEY=VALUE, got {item!r}")
        data[key] = _parse_value(value)
    ablate = getattr(args, "ablate", None)
    if ablate:
        data.update(ABLATIONS[ablate])
    try:
        return Config.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CLIError(f"invalid configuration: {exc}") from None


def _run_dir(cfg: Config) -> Path:
    if not cfg.out:
        raise CLIError("an output run directory is required (--out)")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / FAILED_FILE).unlink(missing_ok=True)
    cfg.save(out / CONFIG_FILE)
    return out


def _require(cfg: Config, *names: str) -> None:
    missing = [n for n in names if not getattr(cfg, n)]
    if missing:
        raise CLIError("missing required path(s): " + ", ".join("--" + n for n in missing))


def _kg_and_index(cfg: Config, run: Path | None = None):
    """Load the KG; reuse a cached index in ``run`` when it matches the KG bytes."""
    _require(cfg, "kg")
    kg_path = Path(cfg.kg)
    if not kg_path.is_file():
        raise CLIError(f"KG file not found: {kg_path}")
    kg = load_kg(kg_path)
    sha = file_sha256(kg_path)
    cached = run / INDEX_FILE if run is not None else None
    if cached is not None and cached.is_file():
        index = load_index(cached, sha)
        if index is not None and (index.k1, index.b) == (cfg.k1, cfg.b):
            return kg, index, sha
    return kg, build_index(kg, cfg.k1, cfg.b), sha


def _corpus(cfg: Config, need_labels: bool):
    _require(cfg, "tables", *(["labels"] if need_labels else []))
    return read_corpus(cfg.tables, cfg.labels, cfg.has_header)


# --- commands ---------------------------------------------------------------------------


def cmd_index(cfg: Config) -> int:
    run = _run_dir(cfg)
    kg, index, sha = _kg_and_index(cfg)
    shutil.copyfile(cfg.kg, run / KG_FILE)
    save_index(index, run / INDEX_FILE, sha)
    stats = {"entities": len(kg), "edges": kg.edge_count, "indexed": index.N,
             "avgwl": index.avgwl, "tokens": index.token_count(), "kg_sha256": sha}
    _write_json(run / "index_stats.json", stats)
    print(f"N={index.N} avgwl={index.avgwl:.4f} tokens={index.token_count()} "
          f"entities={len(kg)} edges={kg.edge_count}")
    return 0


def annotation_record(ann, vocab, cfg: Config, preview: int = 48) -> dict:
    parts = serialize_table(ann, PLAIN, vocab, cfg.budgets, no_ct=cfg.no_ct)
    tokens = [tok for part in parts for tok in vocab.decode(part.token_ids)]
    columns = []
    for c, cc in enumerate(ann.candidates):
        columns.append({
            "column": c,
            "kind": cc.kind,
            "types": [{"id": t.id, "label": t.label, "cts": t.cts} for t in cc.types],
            "summary": list(cc.summary) if cc.summary else None,
            "prefix": prefix_text(cc),
            "feature_source": ann.feature_sources[c],
            "linked": ann.linked_columns[c] if ann.linked_columns else None,
            "label": ann.labels.get(c),
        })
    return {
        "table_id": ann.table_id,
        "retained_rows": list(ann.retained_rows),
        "row_scores": [float(s) for s in ann.row_scores],
        "columns": columns,
        "token_preview": tokens[:preview],
    }


def cmd_annotate(cfg: Config) -> int:
    run = _run_dir(cfg)
    corpus = _corpus(cfg, need_labels=False)
    kg, index, _ = _kg_and_index(cfg, run)
    t0 = time.perf_counter()
    annotated = annotate_corpus(corpus, kg, index, cfg.workers, **cfg.annotator_knobs())
    seconds = time.perf_counter() - t0
    vocab = build_vocabulary((t.rows for t in corpus), kg,
                             [s for a in annotated for s in map(prefix_text, a.candidates) if s])
    _write_jsonl(run / "annotations.jsonl", (annotation_record(a, vocab, cfg) for a in annotated))
    kinds: dict[str, int] = {}
    for a in annotated:
        for cc in a.candidates:
            kinds[cc.kind] = kinds.get(cc.kind, 0) + 1
    print(f"annotated {len(annotated)} tables in {seconds:.2f}s; column kinds "
          + " ".join(f"{k}={v}" for k, v in sorted(kinds.items())))
    return 0


def _label_names(result) -> list[dict]:
    names = result.label_set
    out = []
    for rec in result.column_records:
        out.append({**rec, "gt_label": names[rec["gt"]] if rec["gt"] >= 0 else None,
                    "pred_label": names[rec["pred"]]})
    return out


def cmd_train(cfg: Config) -> int:
    from .evaluation import run_experiment
    from .trainer import save_checkpoint

    run = _run_dir(cfg)
    corpus = _corpus(cfg, need_labels=True)
    kg, index, _ = _kg_and_index(cfg, run)
    result = run_experiment(corpus, kg, index, cfg)
    save_checkpoint(run / CHECKPOINT_FILE, result.train_result.model, result.vocab, result.label_set,
                    cfg, {"best_epoch": result.train_result.best_epoch})
    _write_jsonl(run / "history.jsonl", result.train_result.history)
    _write_json(run / "split.json", result.split.to_dict())
    _write_json(run / "metrics.json", result.test_metrics)
    _write_jsonl(run / "predictions.jsonl", _label_names(result))
    m = result.test_metrics
    print(f"test accuracy={m['accuracy']:.4f} weighted_f1={m['weighted_f1']:.4f} "
          f"best_epoch={result.train_result.best_epoch} epochs={len(result.train_result.history)}")
    return 0


def cmd_eval(args) -> int:
    from .evaluation import metrics_report, stratified_split
    from .trainer import CheckpointError, load_checkpoint, predict, prepare_example

    run = Path(args.run)
    ckpt = Path(args.checkpoint) if args.checkpoint else run / CHECKPOINT_FILE
    if not ckpt.is_file():
        raise CLIError(f"checkpoint not found: {ckpt}")
    try:
        model, vocab, label_set, cfg, _ = load_checkpoint(ckpt)
    except (KeyError, RuntimeError) as exc:
        raise CheckpointError(f"{ckpt}: {exc}") from None
    overrides = {k: str(getattr(args, k)) for k in ("kg", "tables", "labels") if getattr(args, k)}
    cfg = cfg.replace(**overrides)
    corpus = _corpus(cfg, need_labels=True)
    split_path = run / "split.json"
    if split_path.is_file():
        with open(split_path, encoding="utf-8") as fh:
            test_ids = json.load(fh)["test"]
    else:
        test_ids = stratified_split(corpus, cfg.split_seed, cfg.ratios).test
    if not test_ids:
        raise CLIError("test split is empty")
    missing = sorted(set(test_ids) - set(corpus.by_id()))
    if missing:
        raise CLIError(f"test tables not in corpus: {missing[:5]}")
    kg, index, _ = _kg_and_index(cfg, run)
    test = corpus.subset(test_ids)
    annotated = annotate_corpus(test, kg, index, cfg.workers, **cfg.annotator_knobs())
    label_index = {lab: i for i, lab in enumerate(label_set)}
    examples = [prepare_example(a, vocab, label_index, cfg, False) for a in annotated]
    preds = predict(model, examples, cfg, label_set)
    gts = [l for ex in examples for l in ex.labels]
    report = metrics_report([p.label_id for p in preds], gts, list(range(len(label_set))))
    out = Path(args.out) if args.out else run / "eval_metrics.json"
    _write_json(out, report)
    print(f"test accuracy={report['accuracy']:.4f} weighted_f1={report['weighted_f1']:.4f} "
          f"columns={report['n_columns']}")
    return 0


def cmd_ablate(cfg: Config, variants: list[str], seeds: list[int]) -> int:
    from .evaluation import format_table, run_ablation

    unknown = [v for v in variants if v not in ABLATIONS]
    if unknown:
        raise CLIError(f"unknown variant(s) {unknown}; choose from {sorted(ABLATIONS)}")
    run = _run_dir(cfg)
    corpus = _corpus(cfg, need_labels=True)
    kg, index, _ = _kg_and_index(cfg, run)
    rows = run_ablation(corpus, kg, index, cfg, variants, seeds)
    _write_json(run / "ablation.json", rows)
    print(format_table(rows))
    return 0


def cmd_filters(cfg: Config, k_values: list[int], seeds: list[int]) -> int:
    from .evaluation import compare_row_filters, format_table

    run = _run_dir(cfg)
    corpus = _corpus(cfg, need_labels=True)
    kg, index, _ = _kg_and_index(cfg, run)
    rows = compare_row_filters(corpus, kg, index, cfg, k_values, seeds)
    # wall-clock goes to its own file so the metrics file stays reproducible
    _write_json(run / "filters.json", [{k: v for k, v in r.items() if k != "seconds"} for r in rows])
    _write_json(run / "filters_timing.json", [{"variant": r["variant"], "seconds": r["seconds"]} for r in rows])
    print(format_table(rows, ("variant", "accuracy", "weighted_f1", "seconds")))
    return 0


def cmd_gen_corpus(args) -> int:
    knobs = {"seed": args.seed, "n_tables": args.n_tables, "noise_rows": args.noise_rows}
    if args.kg_seed is not None:
        knobs["kg_seed"] = args.kg_seed
    paths = write_micro_corpus(args.out, **knobs)
    n = len(list(paths["tables"].glob("*.csv")))
    print(f"wrote {paths['kg']} and {n} tables under {paths['tables']}")
    return 0


# --- argument parsing -------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--kg", help="KG JSONL file")
    common.add_argument("--tables", help="directory of CSV tables")
    common.add_argument("--labels", help="label CSV (table_id,column,label)")
    common.add_argument("--has-header", action="store_true", help="tables carry a header row")
    common.add_argument("--out", help="run directory for all outputs")
    common.add_argument("--seed", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--workers", type=int, help="annotation worker processes")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config key (value parsed as JSON when possible)")

    p = argparse.ArgumentParser(prog="kgcta", description="KG-assisted column type annotation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("index", parents=[common], help="build and persist the KG store and BM25 index")
    sub.add_parser("annotate", parents=[common],
                   help="link, filter rows and generate candidate types for every table")
    tr = sub.add_parser("train", parents=[common], help="train a model and report test metrics")
    tr.add_argument("--ablate", choices=sorted(ABLATIONS), help="train an ablation variant")
    ev = sub.add_parser("eval", help="reload a checkpoint and score its test split")
    ev.add_argument("--run", required=True, help="run directory written by train")
    ev.add_argument("--checkpoint", help="checkpoint path (default RUN/checkpoint.pt)")
    ev.add_argument("--kg")
    ev.add_argument("--tables")
    ev.add_argument("--labels")
    ev.add_argument("--out", help="metrics output path (default RUN/eval_metrics.json)")
    ab = sub.add_parser("ablate", parents=[common], help="compare ablation variants over seeds")
    ab.add_argument("--variants", default="full,no-msk,no-ct,no-fv,sum")
    ab.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    fi = sub.add_parser("filters", parents=[common], help="score-sorted vs original-order top-k rows")
    fi.add_argument("--k-values", type=_int_list, default=[25])
    fi.add_argument("--seeds", type=_int_list, default=[0, 1, 2])
    g = sub.add_parser("gen-corpus", help="write the synthetic micro-corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-tables", type=int, default=200)
    g.add_argument("--noise-rows", type=int, default=0)
    g.add_argument("--kg-seed", type=int)
    return p


def main(argv: list[str] | None = None) -> int:
    from .trainer import CheckpointError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    run_dir = None
    try:
        if args.command == "gen-corpus":
            return cmd_gen_corpus(args)
        if args.command == "eval":
            return cmd_eval(args)
        cfg = _config(args)
        run_dir = Path(cfg.out) if cfg.out else None
        if args.command == "index":
            return cmd_index(cfg)
        if args.command == "annotate":
            return cmd_annotate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg, [v for v in args.variants.split(",") if v], args.seeds)
        if args.command == "filters":
            return cmd_filters(cfg, args.k_values, args.seeds)
        raise CLIError(f"unknown command {args.command!r}")
    except (CLIError, KGError, CorpusError, CheckpointError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if run_dir is not None and run_dir.is_dir():
            (run_dir / FAILED_FILE).write_text(f"{exc}\n", encoding="utf-8")
        return 2


if __name__ == "__main__":
    sys.exit(main())
