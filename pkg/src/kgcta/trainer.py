"""Batching, the multi-task training loop, prediction, checkpoints and gradient checks."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import Config
from .model import (
    ColumnTypeModel,
    combined_loss,
    cross_entropy_loss,
    dmlm_loss_from_logits,
)
from .serialization import (
    COLSTART,
    GROUND_TRUTH,
    MASKED,
    PLAIN,
    AnnotatedTable,
    Vocabulary,
    serialize_table,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "kgcta-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class Example:
    table_id: str
    cls_parts: list           # SerializedInput chunks used for classification
    gt_parts: list | None     # ground-truth chunks, training only
    columns: list[int]        # table column of each classified column, chunk order
    labels: list[int]         # label id per column, -1 if unknown
    features: list[list[int]]  # COLSTART + feature-sequence ids per column
    linked: list[bool] = field(default_factory=list)


def prepare_example(
    table: AnnotatedTable,
    vocab: Vocabulary,
    label_index: dict[str, int],
    cfg: Config,
    with_ground_truth: bool = True,
) -> Example:
    budgets = cfg.budgets
    mode = PLAIN if cfg.no_msk else MASKED
    cls_parts = serialize_table(table, mode, vocab, budgets, no_ct=cfg.no_ct)
    gt_parts = None
    if with_ground_truth and not cfg.no_msk and len(table.labels) == table.n_cols:
        gt_parts = serialize_table(table, GROUND_TRUTH, vocab, budgets, no_ct=cfg.no_ct)
    columns = [c for part in cls_parts for c in part.columns]
    labels = [label_index.get(table.labels.get(c, ""), -1) for c in columns]
    colstart = vocab.id(COLSTART)
    features = []
    for c in columns:
        toks = table.feature_tokens[c][: budgets.feature]
        features.append([colstart] + (vocab.encode(toks) if toks else [vocab.pad]))
    linked = [table.linked_columns[c] if table.linked_columns else False for c in columns]
    return Example(table.table_id, cls_parts, gt_parts, columns, labels, features, linked)


def _pad(seqs: list[list[int]], pad: int = 0) -> torch.Tensor:
    width = max(len(s) for s in seqs)
    out = torch.full((len(seqs), width), pad, dtype=torch.long)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = torch.as_tensor(s, dtype=torch.long)
    return out


def _gather(parts):
    """Flat (sequence index, position) pairs for every column's marker/mask/label."""
    seqs, segs, pos, cls_at, mask_at, label_at = [], [], [], [], [], []
    for part in parts:
        si = len(seqs)
        seqs.append(part.token_ids)
        segs.append(part.segment_ids())
        pos.append(part.position_ids())
        for j in range(len(part.columns)):
            cls_at.append((si, part.colstart[j]))
            mask_at.append((si, part.mask_pos[j]) if part.mask_pos[j] is not None else None)
            label_at.append((si, part.label_pos[j]) if part.label_pos[j] is not None else None)
    return seqs, segs, pos, cls_at, mask_at, label_at


def _rows(h: torch.Tensor, at: list[tuple[int, int]]) -> torch.Tensor:
    idx = torch.as_tensor(at, dtype=torch.long).reshape(-1, 2)
    return h[idx[:, 0], idx[:, 1]]


def forward_batch(model: ColumnTypeModel, batch: list[Example], cfg: Config,
                  compute_dmlm: bool = True, teacher: torch.Tensor | None = None) -> dict:
    """Logits for every column in the batch plus, when available, the DMLM loss.

    ``teacher`` replaces the ground-truth-side vocabulary logits (which are
    returned under ``"teacher"``); the gradient check uses it to hold the
    stop-gradient side fixed while parameters are perturbed.
    """
    cls_parts = [p for ex in batch for p in ex.cls_parts]
    seqs, segs, pos, cls_at, mask_at, _ = _gather(cls_parts)
    h = model.encoder(_pad(seqs), _pad(segs), _pad(pos))
    y_cls = _rows(h, cls_at)
    if cfg.no_fv:
        y_fv = torch.zeros_like(y_cls)
    else:
        feats = [f for ex in batch for f in ex.features]
        y_fv = model.encoder(_pad(feats))[:, 0]
    logits = model.classifier(model.phi(y_cls, y_fv))
    out = {"logits": logits, "labels": torch.as_tensor([l for ex in batch for l in ex.labels])}
    if compute_dmlm and not cfg.no_msk and all(ex.gt_parts for ex in batch):
        gt_seqs, gt_segs, gt_pos, _, _, label_at = _gather([p for ex in batch for p in ex.gt_parts])
        pairs = [(m, g) for m, g in zip(mask_at, label_at) if m is not None and g is not None]
        if pairs:
            msk_logits = model.vocab_logits(_rows(h, [m for m, _ in pairs]))
            if teacher is None:
                h_gt = model.encoder(_pad(gt_seqs), _pad(gt_segs), _pad(gt_pos))
                # teacher side of the distillation carries no gradient
                teacher = model.vocab_logits(_rows(h_gt, [g for _, g in pairs])).detach()
            out["teacher"] = teacher
            out["dmlm"] = dmlm_loss_from_logits(msk_logits, teacher, cfg.dmlm_direction)
    return out


def objective(model: ColumnTypeModel, batch: list[Example], cfg: Config,
              data_scale: float = 1.0, teacher: torch.Tensor | None = None) -> tuple[torch.Tensor, dict]:
    out = forward_batch(model, batch, cfg, teacher=teacher)
    keep = out["labels"] >= 0
    l_ce = cross_entropy_loss(out["logits"][keep], out["labels"][keep]) * data_scale
    s0, s1 = model.log_sigma0.exp(), model.log_sigma1.exp()
    if "dmlm" in out:
        l_dmlm = out["dmlm"] * data_scale
        total = combined_loss(l_dmlm, l_ce, s0, s1)
    else:
        l_dmlm = torch.zeros(())
        total = combined_loss(None, l_ce, s0, s1, use_masked_task=False)
    parts = {"ce": l_ce.item(), "dmlm": l_dmlm.item(), "total": total.item()}
    if "teacher" in out:
        parts["teacher"] = out["teacher"]
    return total, parts


def build_model(cfg: Config, vocab_size: int, n_labels: int) -> ColumnTypeModel:
    return ColumnTypeModel(
        vocab_size, n_labels, d=cfg.d, layers=cfg.layers, heads=cfg.heads, ff=cfg.ff,
        max_seq=cfg.max_seq, dropout=cfg.dropout, temperature=cfg.temperature,
        compose=cfg.compose, segments=cfg.col_cap + 1,
    )


@dataclass
class Prediction:
    table_id: str
    column: int
    label_id: int
    label: str
    scores: list[float]


@torch.no_grad()
def predict(model: ColumnTypeModel, examples: list[Example], cfg: Config,
            label_set: list[str], batch_size: int = 32) -> list[Prediction]:
    """Classify every column from the classification serialization (no ground truth)."""
    was_training = model.training
    model.eval()
    preds = []
    for i in range(0, len(examples), batch_size):
        batch = examples[i : i + batch_size]
        logits = forward_batch(model, batch, cfg, compute_dmlm=False)["logits"]
        k = 0
        for ex in batch:
            for c in ex.columns:
                row = logits[k]
                lid = int(row.argmax())
                preds.append(Prediction(ex.table_id, c, lid, label_set[lid], row.tolist()))
                k += 1
    model.train(was_training)
    return preds


@dataclass
class TrainResult:
    model: ColumnTypeModel
    history: list[dict]
    best_epoch: int


def train(train_ex: list[Example], val_ex: list[Example], cfg: Config, vocab_size: int,
          label_set: list[str], evaluate=None) -> TrainResult:
    """AdamW with linear decay; early stopping on validation weighted F1.

    ``evaluate(preds, examples) -> dict`` scores validation predictions; it
    must return ``weighted_f1``.
    """
    torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = build_model(cfg, vocab_size, len(label_set))
    sigma_params = [model.log_sigma0, model.log_sigma1]
    sigma_ids = {id(p) for p in sigma_params}
    decay = [p for n, p in model.named_parameters() if id(p) not in sigma_ids and p.dim() >= 2]
    no_decay = [p for n, p in model.named_parameters() if id(p) not in sigma_ids and p.dim() < 2]
    groups = [
        {"params": decay, "weight_decay": cfg.weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]
    if not cfg.no_msk:
        groups.append({"params": sigma_params, "weight_decay": 0.0})
    opt = torch.optim.AdamW(groups, lr=cfg.lr, eps=1e-6)
    n_batches = max(1, -(-len(train_ex) // cfg.batch))
    total_steps = cfg.epochs * n_batches
    sched = torch.optim.lr_scheduler.LambdaLR(
        opt, (lambda s: max(0.0, 1.0 - s / total_steps)) if cfg.linear_decay else (lambda s: 1.0)
    )
    history, best, best_epoch, best_state, stale = [], -1.0, -1, None, 0
    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(len(train_ex))
        sums = {"ce": 0.0, "dmlm": 0.0, "total": 0.0}
        for bi in range(n_batches):
            batch = [train_ex[i] for i in order[bi * cfg.batch : (bi + 1) * cfg.batch]]
            if not batch:
                continue
            loss, parts = objective(model, batch, cfg)
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            for key in sums:
                sums[key] += parts[key] / n_batches
        record = {"epoch": epoch, **{f"train_{k}": v for k, v in sums.items()},
                  "sigma0": model.log_sigma0.exp().item(), "sigma1": model.log_sigma1.exp().item()}
        if val_ex and evaluate is not None:
            record.update({f"val_{k}": v for k, v in
                           evaluate(predict(model, val_ex, cfg, label_set), val_ex).items()})
            score = record["val_weighted_f1"]
            if score > best:
                best, best_epoch, stale = score, epoch, 0
                best_state = copy.deepcopy(model.state_dict())
            else:
                stale += 1
        history.append(record)
        log.info("epoch %d %s", epoch, record)
        if val_ex and evaluate is not None and stale >= cfg.patience:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        best_epoch = len(history) - 1
    model.eval()
    return TrainResult(model, history, best_epoch)


# --- checkpoints -----------------------------------------------------------------


def save_checkpoint(path: str | Path, model: ColumnTypeModel, vocab: Vocabulary,
                    label_set: list[str], cfg: Config, extra: dict | None = None) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "state_dict": model.state_dict(),
            "vocab": vocab.to_list(),
            "labels": list(label_set),
            "config": cfg.to_dict(),
            "extra": extra or {},
        },
        path,
    )


class CheckpointError(ValueError):
    pass


def load_checkpoint(path: str | Path):
    blob = torch.load(path, map_location="cpu", weights_only=False)
    if blob.get("format") != CHECKPOINT_FORMAT or blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint format/version")
    cfg = Config.from_dict(blob["config"])
    vocab = Vocabulary(blob["vocab"][5:])
    if vocab.to_list() != blob["vocab"]:
        raise CheckpointError(f"{path}: vocabulary layout mismatch")
    model = build_model(cfg, len(vocab), len(blob["labels"]))
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, vocab, blob["labels"], cfg, blob.get("extra", {})


# --- finite-difference gradient check ---------------------------------------------------


def gradient_check(model: ColumnTypeModel, batch: list[Example], cfg: Config,
                   tolerance: float = 1e-4, per_group: int = 20, step: float = 1e-5,
                   seed: int = 0, data_scale: float = 1.0, floor: float = 1e-6) -> dict:
    """Compare autograd gradients of the full objective with central differences.

    Runs on a float64 copy in eval mode. The ground-truth-side distribution
    is held at its unperturbed value, matching the stop-gradient in the
    objective. Relative error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    m = copy.deepcopy(model).double().eval()
    rng = np.random.default_rng(seed)
    used_tokens = sorted({t for ex in batch for p in ex.cls_parts for t in p.token_ids})
    emb_row = used_tokens[int(rng.integers(len(used_tokens)))]
    layer0 = m.encoder.layers[0].attn.qkv.weight
    groups = {
        "log_sigma0": (m.log_sigma0, None),
        "log_sigma1": (m.log_sigma1, None),
        "w_o": (m.w_o.weight, None),
        "compose": (m.compose.weight, None),
        "classifier": (m.classifier.weight, None),
        "attention_qkv": (layer0, None),
        "embedding_row": (m.encoder.tok.weight, emb_row),
        "segment_row": (m.encoder.seg.weight, 1),
    }
    m.zero_grad()
    loss, parts = objective(m, batch, cfg, data_scale)
    loss.backward()
    teacher = parts.get("teacher")
    report = {"loss": loss.item(), "groups": {}, "worst": []}
    entries = []
    for name, (param, row) in groups.items():
        flat = param.data.view(-1)
        if row is not None:
            width = param.shape[1]
            pool = np.arange(row * width, (row + 1) * width)
        else:
            pool = np.arange(flat.numel())
        picks = pool if pool.size <= per_group else rng.choice(pool, per_group, replace=False)
        worst = 0.0
        for idx in picks:
            idx = int(idx)
            # parameters a variant never touches have no grad: analytic value 0
            analytic = float(param.grad.view(-1)[idx]) if param.grad is not None else 0.0
            orig = float(flat[idx])
            with torch.no_grad():
                flat[idx] = orig + step
                f_plus = objective(m, batch, cfg, data_scale, teacher)[0].item()
                flat[idx] = orig - step
                f_minus = objective(m, batch, cfg, data_scale, teacher)[0].item()
                flat[idx] = orig
            numeric = (f_plus - f_minus) / (2 * step)
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            entries.append((rel, name, idx, analytic, numeric))
            worst = max(worst, rel)
        report["groups"][name] = {"checked": len(picks), "max_rel_err": worst}
    entries.sort(reverse=True)
    report["worst"] = [
        {"group": n, "index": i, "analytic": a, "numeric": nu, "rel_err": r}
        for r, n, i, a, nu in entries[:10]
    ]
    report["max_rel_err"] = entries[0][0] if entries else 0.0
    report["passed"] = report["max_rel_err"] < tolerance
    return report
