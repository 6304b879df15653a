"""Small transformer encoder, composition, vocabulary/classifier heads and losses."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn


class SelfAttention(nn.Module):
    def __init__(self, d: int, heads: int):
        super().__init__()
        if d % heads:
            raise ValueError(f"d={d} not divisible by heads={heads}")
        self.heads = heads
        self.qkv = nn.Linear(d, 3 * d)
        self.out = nn.Linear(d, d)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        B, T, d = x.shape
        q, k, v = self.qkv(x).view(B, T, 3, self.heads, d // self.heads).permute(2, 0, 3, 1, 4)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(d // self.heads)
        att = att.masked_fill(pad_mask[:, None, None, :], float("-inf"))
        att = att.softmax(dim=-1)
        y = (att @ v).transpose(1, 2).reshape(B, T, d)
        return self.out(y)


class EncoderLayer(nn.Module):
    def __init__(self, d: int, heads: int, ff: int, dropout: float):
        super().__init__()
        self.ln1 = nn.LayerNorm(d)
        self.attn = SelfAttention(d, heads)
        self.ln2 = nn.LayerNorm(d)
        self.ff = nn.Sequential(nn.Linear(d, ff), nn.GELU(), nn.Linear(ff, d))
        self.drop = nn.Dropout(dropout)

    def forward(self, x, pad_mask):
        x = x + self.drop(self.attn(self.ln1(x), pad_mask))
        return x + self.drop(self.ff(self.ln2(x)))


class Encoder(nn.Module):
    def __init__(self, vocab_size: int, d: int = 64, layers: int = 2, heads: int = 4,
                 ff: int = 128, max_seq: int = 512, dropout: float = 0.1, pad_id: int = 0,
                 segments: int = 9):
        super().__init__()
        self.max_seq, self.pad_id = max_seq, pad_id
        self.tok = nn.Embedding(vocab_size, d)
        self.pos = nn.Embedding(max_seq, d)
        # column slot of each token: 0 for feature sequences, 1..cap inside a table
        self.seg = nn.Embedding(segments, d)
        self.layers = nn.ModuleList(EncoderLayer(d, heads, ff, dropout) for _ in range(layers))
        self.ln = nn.LayerNorm(d)
        self.drop = nn.Dropout(dropout)
        nn.init.normal_(self.tok.weight, std=0.02)
        nn.init.normal_(self.pos.weight, std=0.02)
        nn.init.normal_(self.seg.weight, std=0.02)

    def forward(self, ids: torch.Tensor, segments: torch.Tensor | None = None,
                positions: torch.Tensor | None = None) -> torch.Tensor:
        """``positions`` defaults to 0..T-1; ``segments`` adds a column-slot embedding."""
        if ids.dim() == 1:
            lift = lambda t: None if t is None else t[None]
            return self.forward(ids[None], lift(segments), lift(positions))[0]
        if ids.shape[1] > self.max_seq:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds max_seq={self.max_seq}")
        if int(ids.max()) >= self.tok.num_embeddings:
            raise ValueError("token id out of vocabulary range")
        pad_mask = ids == self.pad_id
        if positions is None:
            positions = torch.arange(ids.shape[1], device=ids.device)[None]
        x = self.tok(ids) + self.pos(positions)
        if segments is not None:
            if int(segments.max()) >= self.seg.num_embeddings:
                raise ValueError("segment id out of range")
            x = x + self.seg(segments)
        x = self.drop(x)
        for layer in self.layers:
            x = layer(x, pad_mask)
        return self.ln(x)


class ColumnTypeModel(nn.Module):
    """Encoder plus the vocabulary projection, composition, classifier and loss scalars.

    ``log_sigma0``/``log_sigma1`` are the logarithms of the two loss-balance
    scalars; both start at 0 (sigma = 1).
    """

    def __init__(self, vocab_size: int, n_labels: int, d: int = 64, layers: int = 2,
                 heads: int = 4, ff: int = 128, max_seq: int = 512, dropout: float = 0.1,
                 temperature: float = 2.0, compose: str = "linear", pad_id: int = 0,
                 segments: int = 9):
        super().__init__()
        if temperature <= 1:
            raise ValueError("temperature must be > 1")
        if compose not in ("linear", "sum"):
            raise ValueError(f"unknown compose mode: {compose!r}")
        self.encoder = Encoder(vocab_size, d, layers, heads, ff, max_seq, dropout, pad_id, segments)
        self.w_o = nn.Linear(d, vocab_size, bias=False)
        self.compose_mode = compose
        self.compose = nn.Linear(2 * d, d)
        with torch.no_grad():
            self.compose.weight.copy_(torch.cat([torch.eye(d), torch.eye(d)], dim=1))
            self.compose.bias.zero_()
        self.classifier = nn.Linear(d, n_labels)
        self.log_sigma0 = nn.Parameter(torch.zeros(()))
        self.log_sigma1 = nn.Parameter(torch.zeros(()))
        self.temperature = temperature

    def phi(self, y_cls: torch.Tensor, y_fv: torch.Tensor) -> torch.Tensor:
        if self.compose_mode == "sum":
            return y_cls + y_fv
        return self.compose(torch.cat([y_cls, y_fv], dim=-1))

    def vocab_logits(self, h: torch.Tensor) -> torch.Tensor:
        return self.w_o(h / self.temperature)


def compose(y_cls: torch.Tensor, y_fv: torch.Tensor, weight: torch.Tensor | None = None,
            bias: torch.Tensor | None = None) -> torch.Tensor:
    """Elementwise sum without ``weight``; otherwise a linear map of the concatenation."""
    if weight is None:
        return y_cls + y_fv
    return F.linear(torch.cat([y_cls, y_fv], dim=-1), weight, bias)


def vocab_project(h: torch.Tensor, w_o: torch.Tensor, temperature: float = 2.0) -> torch.Tensor:
    """softmax(W_o (h / T)) with ``w_o`` shaped (V, d)."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    return torch.softmax(F.linear(h / temperature, w_o), dim=-1)


def dmlm_loss(y_msk: torch.Tensor, y_gt: torch.Tensor, direction: str = "as_printed") -> torch.Tensor:
    """-sum_v y_msk[v] log y_gt[v], averaged over leading dims.

    ``direction="standard"`` swaps the roles (teacher outside the log).
    Callers pass ``y_gt`` detached when the teacher should not be trained.
    """
    if direction == "standard":
        y_msk, y_gt = y_gt, y_msk
    elif direction != "as_printed":
        raise ValueError(f"unknown dmlm direction: {direction!r}")
    return -(y_msk * torch.log(y_gt)).sum(-1).mean()


def dmlm_loss_from_logits(msk_logits: torch.Tensor, gt_logits: torch.Tensor,
                          direction: str = "as_printed") -> torch.Tensor:
    """Same quantity as :func:`dmlm_loss` on softmax outputs, computed in log space."""
    if direction == "standard":
        msk_logits, gt_logits = gt_logits, msk_logits
    elif direction != "as_printed":
        raise ValueError(f"unknown dmlm direction: {direction!r}")
    return -(msk_logits.softmax(-1) * gt_logits.log_softmax(-1)).sum(-1).mean()


def cross_entropy_loss(logits: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    return F.cross_entropy(logits, gt)


def combined_loss(l_dmlm, l_ce, sigma0, sigma1, use_masked_task: bool = True):
    """Uncertainty-weighted sum of the two task losses.

    With the masked task disabled the sigma0 terms are dropped.
    """
    if use_masked_task:
        return l_dmlm / (2 * sigma0**2) + l_ce / (2 * sigma1**2) + torch.log(
            torch.as_tensor(sigma0 * sigma1)
        )
    return l_ce / (2 * sigma1**2) + torch.log(torch.as_tensor(sigma1))
