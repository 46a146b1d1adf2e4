"""Stratified k-fold cross-validation harness."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Sequence

import numpy as np

from ..errors import DataError
from .metrics import METRIC_NAMES, compute_metrics


class StratificationError(DataError):
    pass


class ModelSpec(Protocol):
    name: str

    def fit(self, items: Sequence, y: np.ndarray, seed: int, validation=None) -> Any: ...

    def predict(self, model: Any, items: Sequence) -> np.ndarray: ...


def stratified_folds(y, k: int, seed: int = 0) -> np.ndarray:
    """Fold index per sample.

    Each class is shuffled and dealt round-robin; the second class continues
    where the first stopped, so fold sizes differ by at most one.
    """
    y = np.asarray(y).astype(int)
    n = len(y)
    if k < 2 or k > n:
        raise ValueError(f"k={k} must lie in [2, n_samples={n}]")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=int)
    cursor = 0
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        folds[idx] = (cursor + np.arange(len(idx))) % k
        cursor = (cursor + len(idx)) % k
    for f in range(k):
        train = y[folds != f]
        if len(np.unique(train)) < 2:
            raise StratificationError(f"training split of fold {f} holds a single class")
    return folds


def validation_split(y, fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (train_idx, val_idx) keeping >= 2 samples per class in train."""
    y = np.asarray(y).astype(int)
    val = []
    for c in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == c))
        m = min(int(math.floor(fraction * len(idx) + 0.5)), max(len(idx) - 2, 0))
        val.extend(idx[:m].tolist())
    val = np.array(sorted(val), dtype=int)
    train = np.setdiff1d(np.arange(len(y)), val)
    return train, val


@dataclass
class CVReport:
    method: str
    per_fold: list
    mean: dict
    std: dict
    pooled: dict
    folds: list
    seed: int
    scores: list = field(default_factory=list)
    config_digest: str = ""

    def to_dict(self) -> dict:
        return {"method": self.method, "per_fold": self.per_fold, "mean": self.mean,
                "std": self.std, "pooled": self.pooled, "folds": self.folds,
                "seed": self.seed, "config_digest": self.config_digest}

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_clean(self.to_dict()), indent=1, sort_keys=True) + "\n")
        return path


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def crossval(items: Sequence, y, model_spec: ModelSpec, k: int = 10, seed: int = 0,
             validation_fraction: float = 0.1, threshold: float = 0.5,
             subject_ids: Sequence[str] | None = None) -> CVReport:
    y = np.asarray(y).astype(int)
    if len(items) != len(y):
        raise ValueError("items and labels differ in length")
    if len(np.unique(y)) < 2:
        raise DataError("cross-validation needs both classes")
    folds = stratified_folds(y, k, seed)
    scores = np.full(len(y), np.nan)
    per_fold = []
    for f in range(k):
        test_idx = np.flatnonzero(folds == f)
        train_idx = np.flatnonzero(folds != f)
        rng = np.random.default_rng([seed, f])
        inner, val = validation_split(y[train_idx], validation_fraction, rng)
        tr, va = train_idx[inner], train_idx[val]
        validation = ([items[i] for i in va], y[va]) if len(va) else None
        model = model_spec.fit([items[i] for i in tr], y[tr], seed + f, validation)
        s = np.asarray(model_spec.predict(model, [items[i] for i in test_idx]), dtype=float)
        scores[test_idx] = s
        m = compute_metrics(y[test_idx], s, threshold, allow_single_class=True).as_dict()
        m.update(fold=f, n_train=len(tr), n_val=len(va), n_test=len(test_idx))
        history = getattr(model, "history", None) or {}
        if history.get("val_loss"):
            m["final_val_loss"] = history["val_loss"][-1]
            m["final_train_loss"] = history["train_loss"][-1]
        per_fold.append(m)
    mean = {name: float(np.nanmean([p[name] for p in per_fold])) if not all(
        math.isnan(p[name]) for p in per_fold) else float("nan") for name in METRIC_NAMES}
    std = {name: float(np.nanstd([p[name] for p in per_fold])) if not all(
        math.isnan(p[name]) for p in per_fold) else float("nan") for name in METRIC_NAMES}
    pooled = compute_metrics(y, scores, threshold).as_dict()
    ids = list(subject_ids) if subject_ids is not None else [str(i) for i in range(len(y))]
    score_rows = [{"subject_id": ids[i], "fold": int(folds[i]), "label": int(y[i]),
                   "score": float(scores[i])} for i in range(len(y))]
    return CVReport(model_spec.name, per_fold, mean, std, pooled, folds.tolist(), seed, score_rows)
