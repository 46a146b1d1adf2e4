"""Effective-connectivity matrix container and its on-disk format.

Files are a headerless CSV (row = source node, column = target node) plus a
JSON sidecar with the same stem and a ``.json`` suffix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError


@dataclass(frozen=True)
class ECMatrix:
    scores: np.ndarray
    tau: int
    subject_id: str = ""
    group: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
            raise ValueError(f"EC scores must be square, got shape {scores.shape}")
        if np.any(np.diag(scores) != 0):
            raise ValueError("EC matrix diagonal must be zero")
        object.__setattr__(self, "scores", scores)

    @property
    def n_nodes(self) -> int:
        return self.scores.shape[0]

    def with_scores(self, scores) -> "ECMatrix":
        return replace(self, scores=np.asarray(scores, dtype=float))


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def write_ec(ec: ECMatrix, path, **extra) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(repr(float(v)) for v in row) for row in ec.scores]
    path.write_text("\n".join(lines) + "\n")
    meta = {"subject_id": ec.subject_id, "group": ec.group, "tau": int(ec.tau)}
    meta.update(ec.meta)
    meta.update(extra)
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    return path


def read_ec(path) -> ECMatrix:
    path = Path(path)
    try:
        scores = np.loadtxt(path, delimiter=",", ndmin=2)
        meta = json.loads(sidecar_path(path).read_text())
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read EC matrix {path}: {exc}") from exc
    base = {k: meta.pop(k) for k in ("subject_id", "group", "tau") if k in meta}
    try:
        return ECMatrix(scores, int(base.get("tau", 0)), base.get("subject_id", ""),
                        base.get("group", ""), meta)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
