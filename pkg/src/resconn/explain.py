"""Edge-perturbation local surrogate explanations of graph classifiers.

Around one graph, edges are switched off at random; the classifier is queried
on every perturbed graph and a kernel-weighted ridge model from edge-presence
masks to predicted probability gives one coefficient per edge.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, NumericalError
from .graph import DirectedGraph

DEFAULT_POS = 0.02
DEFAULT_NEG = -0.02


@dataclass(frozen=True)
class ExplanationMap:
    edge_coefficients: np.ndarray
    roi_scores: np.ndarray
    selected_stroke: frozenset = frozenset()
    selected_control: frozenset = frozenset()
    fidelity: float = 1.0
    zero_variance: bool = False
    intercept: float = 0.0
    prediction: float = float("nan")
    meta: dict = field(default_factory=dict)

    def ranked_edges(self) -> list[tuple[int, int, float]]:
        """Edges with a nonzero coefficient, largest |coefficient| first."""
        coef = self.edge_coefficients
        idx = np.argwhere(coef != 0)
        rows = [(int(i), int(j), float(coef[i, j])) for i, j in idx]
        return sorted(rows, key=lambda r: (-abs(r[2]), r[0], r[1]))


class AtlasError(DataError):
    pass


@dataclass(frozen=True)
class Atlas:
    names: tuple
    hemispheres: tuple
    networks: tuple

    def __len__(self):
        return len(self.names)


def read_atlas(path) -> Atlas:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    need = {"node_index", "node_name", "hemisphere", "network_name"}
    if not rows or need - set(rows[0]):
        raise AtlasError(f"{path}: atlas needs columns {sorted(need)}")
    rows.sort(key=lambda r: int(r["node_index"]))
    if [int(r["node_index"]) for r in rows] != list(range(len(rows))):
        raise AtlasError(f"{path}: node_index must run 0..N-1 without gaps")
    return Atlas(tuple(r["node_name"] for r in rows), tuple(r["hemisphere"] for r in rows),
                 tuple(r["network_name"] for r in rows))


def write_atlas(atlas: Atlas, path) -> Path:
    path = Path(path)
    lines = ["node_index,node_name,hemisphere,network_name"]
    lines += [f"{i},{n},{h},{w}" for i, (n, h, w) in
              enumerate(zip(atlas.names, atlas.hemispheres, atlas.networks))]
    path.write_text("\n".join(lines) + "\n")
    return path


def _weighted_ridge(Z, y, w, penalty):
    wsum = w.sum()
    zm = (w[:, None] * Z).sum(axis=0) / wsum
    ym = float((w * y).sum() / wsum)
    Zc = Z - zm
    yc = y - ym
    A = Zc.T @ (w[:, None] * Zc) + penalty * np.eye(Z.shape[1])
    coef = np.linalg.solve(A, Zc.T @ (w * yc))
    intercept = ym - zm @ coef
    fitted = intercept + Z @ coef
    ss_tot = float((w * (y - ym) ** 2).sum())
    ss_res = float((w * (y - fitted) ** 2).sum())
    return coef, intercept, ss_res, ss_tot


def lime_explain(predict_fn: Callable[[DirectedGraph], float], graph: DirectedGraph,
                 n_samples: int = 1000, kernel_width: float | None = None, seed: int = 0,
                 ridge: float = 1e-3, max_edges: int = 500,
                 pos: float = DEFAULT_POS, neg: float = DEFAULT_NEG,
                 aggregate: str = "out") -> ExplanationMap:
    """Explain ``predict_fn`` around ``graph`` by random edge removal.

    Each explained edge is kept with probability 0.5.  The first sample is the
    unperturbed graph.  Sample weights are exp(-d^2 / width^2), where d is the
    Euclidean distance between the perturbed and the full mask (the square
    root of the number of removed edges); ``kernel_width`` defaults to
    0.25 * sqrt(#edges).  When the graph has more than ``max_edges`` edges,
    only the ``max_edges`` largest by |weight| are perturbed.
    """
    edges = graph.edges()
    if not edges:
        raise ValueError("cannot explain a graph without edges")
    if len(edges) > max_edges:
        weights = np.array([abs(graph.adjacency[i, j]) for i, j in edges])
        order = np.argsort(-weights, kind="stable")[:max_edges]
        edges = [edges[k] for k in sorted(order)]
    m = len(edges)
    if n_samples < 10 * m:
        raise ValueError(f"need n_samples >= 10 * #edges = {10 * m}, got {n_samples}")
    if kernel_width is None:
        kernel_width = 0.25 * math.sqrt(m)
    rng = np.random.default_rng(seed)
    Z = (rng.random((n_samples, m)) < 0.5).astype(float)
    Z[0] = 1.0
    rows, cols = np.array(edges).T
    preds = np.empty(n_samples)
    for s in range(n_samples):
        mask = graph.mask.copy()
        off = Z[s] == 0
        mask[rows[off], cols[off]] = False
        p = float(predict_fn(graph.with_mask(mask)))
        if not math.isfinite(p):
            raise NumericalError(f"predict_fn returned {p} for perturbation sample {s}")
        preds[s] = p
    dist2 = (1.0 - Z).sum(axis=1)
    w = np.exp(-dist2 / kernel_width ** 2)
    coef_mat = np.zeros((graph.n_nodes, graph.n_nodes))
    zero_var = bool(np.ptp(preds) == 0)
    if zero_var:
        intercept, fidelity = float(preds[0]), 1.0
    else:
        coef, intercept, ss_res, ss_tot = _weighted_ridge(Z, preds, w, ridge)
        coef_mat[rows, cols] = coef
        fidelity = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    roi = aggregate_roi(coef_mat, aggregate)
    stroke, control = threshold_rois(roi, pos, neg)
    return ExplanationMap(coef_mat, roi, frozenset(stroke), frozenset(control), float(fidelity),
                          zero_var, float(intercept), float(preds[0]),
                          {"n_samples": n_samples, "kernel_width": kernel_width,
                           "n_edges_explained": m, "seed": seed})


def aggregate_roi(coefficients, direction: str = "out") -> np.ndarray:
    """Per-node sum of coefficients: over outgoing edges (row sums) by default,
    incoming edges with ``direction='in'``."""
    coef = coefficients.edge_coefficients if isinstance(coefficients, ExplanationMap) \
        else np.asarray(coefficients, dtype=float)
    if not np.all(np.isfinite(coef)):
        raise ValueError("coefficients must be finite")
    if direction == "out":
        return coef.sum(axis=1)
    if direction == "in":
        return coef.sum(axis=0)
    raise ValueError(f"unknown aggregation direction {direction!r}")


def threshold_rois(scores, pos: float = DEFAULT_POS, neg: float = DEFAULT_NEG):
    """Nodes above ``pos`` (stroke-indicative) and below ``neg`` (control-indicative)."""
    if pos <= neg:
        raise ValueError("pos threshold must exceed neg threshold")
    scores = np.asarray(scores, dtype=float)
    return (set(np.flatnonzero(scores > pos).tolist()),
            set(np.flatnonzero(scores < neg).tolist()))


def map_to_networks(nodes, atlas: Atlas | Sequence[str]) -> dict[str, int]:
    networks = atlas.networks if isinstance(atlas, Atlas) else tuple(atlas)
    counts = Counter()
    for v in sorted(nodes):
        if not 0 <= v < len(networks):
            raise AtlasError(f"node {v} is not mapped by the atlas")
        counts[networks[v]] += 1
    return dict(sorted(counts.items()))


def write_edge_coefficients(exp: ExplanationMap, path, node_names: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target", "coefficient"])
        for i, j, c in exp.ranked_edges():
            src = node_names[i] if node_names else i
            tgt = node_names[j] if node_names else j
            w.writerow([src, tgt, repr(c)])
    return path


def write_roi_scores(scores, path, pos: float = DEFAULT_POS, neg: float = DEFAULT_NEG,
                     node_names: Sequence[str] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "score", "selected_as"])
        for v, s in enumerate(np.asarray(scores, dtype=float)):
            sel = "stroke" if s > pos else "control" if s < neg else ""
            w.writerow([node_names[v] if node_names else v, repr(float(s)), sel])
    return path


def write_network_histogram(hist: dict, path, **meta) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({**meta, **hist}, indent=1, sort_keys=True) + "\n")
    return path
