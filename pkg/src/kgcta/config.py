"""Run configuration: pipeline, model and ablation knobs."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .serialization import Budgets


@dataclass
class Config:
    # paths
    kg: str | None = None
    tables: str | None = None
    labels: str | None = None
    out: str | None = None
    has_header: bool = False
    # pipeline
    top_n: int = 10
    j: int = 3
    k: int = 25
    col_budget: int = 64
    col_cap: int = 8
    max_seq: int = 512
    feature_budget: int = 128
    k1: float = 1.2
    b: float = 0.75
    temperature: float = 2.0
    row_filter: str = "score"
    workers: int = 1
    # model
    d: int = 64
    layers: int = 2
    heads: int = 4
    ff: int = 128
    lr: float = 3e-3
    linear_decay: bool = True
    weight_decay: float = 0.01
    epochs: int = 30
    batch: int = 16
    dropout: float = 0.1
    seed: int = 0
    split_seed: int = 0
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2)
    patience: int = 8
    compose: str = "linear"
    dmlm_direction: str = "as_printed"
    # ablations
    no_msk: bool = False
    no_ct: bool = False
    no_fv: bool = False
    repeats: int = 1

    def __post_init__(self) -> None:
        self.ratios = tuple(float(r) for r in self.ratios)
        self.validate()

    def validate(self) -> None:
        positive = ("top_n", "j", "k", "col_budget", "col_cap", "max_seq", "feature_budget",
                    "d", "layers", "heads", "ff", "epochs", "batch", "patience", "workers", "repeats")
        for name in positive:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        if self.k1 < 0 or not 0 <= self.b <= 1:
            raise ValueError("BM25 parameters out of range")
        if self.temperature <= 1:
            raise ValueError("temperature must be > 1")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 1) > 1e-9 or min(self.ratios) < 0:
            raise ValueError("ratios must be three non-negative numbers summing to 1")
        if self.row_filter not in ("score", "original"):
            raise ValueError(f"row_filter must be 'score' or 'original', got {self.row_filter!r}")
        if self.compose not in ("linear", "sum"):
            raise ValueError(f"compose must be 'linear' or 'sum', got {self.compose!r}")
        if self.dmlm_direction not in ("as_printed", "standard"):
            raise ValueError(f"unknown dmlm_direction {self.dmlm_direction!r}")
        if self.d % self.heads:
            raise ValueError("d must be divisible by heads")

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "Config":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ratios"] = list(self.ratios)
        return d

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    @property
    def budgets(self) -> Budgets:
        return Budgets(self.col_budget, self.col_cap, self.max_seq, self.feature_budget)

    def annotator_knobs(self) -> dict:
        return dict(top_n=self.top_n, j=self.j, k=self.k,
                    feature_budget=self.feature_budget, row_filter=self.row_filter)


ABLATIONS = {
    "full": {},
    "no-msk": {"no_msk": True},
    "no-ct": {"no_ct": True, "no_fv": True},
    "no-fv": {"no_fv": True},
    "sum": {"compose": "sum"},
}
