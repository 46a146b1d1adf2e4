"""Directed graphs built from EC matrices and their node attributions.

LDP (local degree profile, 10 columns) and LTP (local topology profile,
13 columns) are computed on the binary edge structure; weights are carried
along for consumers that need them.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .ecmatrix import ECMatrix
from .errors import DataError

LDP_NAMES = (
    "in_degree", "out_degree",
    "nbr_in_min", "nbr_in_max", "nbr_in_mean", "nbr_in_std",
    "nbr_out_min", "nbr_out_max", "nbr_out_mean", "nbr_out_std",
)
LTP_NAMES = LDP_NAMES + ("edge_betweenness", "jaccard", "local_degree_score")


@dataclass(frozen=True)
class DirectedGraph:
    """``mask[i, j]`` marks the edge i -> j; ``adjacency`` holds its weight."""

    adjacency: np.ndarray
    mask: np.ndarray | None = None
    node_labels: tuple = ()

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=float)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.all(np.isfinite(adj)):
            raise ValueError("adjacency weights must be finite")
        mask = adj != 0 if self.mask is None else np.array(self.mask, dtype=bool)
        np.fill_diagonal(adj, 0.0)
        np.fill_diagonal(mask, False)
        adj[~mask] = 0.0
        labels = tuple(self.node_labels) or tuple(str(i) for i in range(adj.shape[0]))
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "node_labels", labels)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    @property
    def n_edges(self) -> int:
        return int(self.mask.sum())

    def edges(self) -> list[tuple[int, int]]:
        return [tuple(e) for e in np.argwhere(self.mask)]

    def with_mask(self, mask) -> "DirectedGraph":
        mask = np.asarray(mask, dtype=bool) & self.mask
        return replace(self, adjacency=np.where(mask, self.adjacency, 0.0), mask=mask)

    def permuted(self, perm) -> "DirectedGraph":
        """Graph with node ``perm[k]`` relabelled as node ``k``."""
        perm = np.asarray(perm)
        return DirectedGraph(self.adjacency[np.ix_(perm, perm)], self.mask[np.ix_(perm, perm)],
                             tuple(self.node_labels[p] for p in perm))

    def reversed(self) -> "DirectedGraph":
        return DirectedGraph(self.adjacency.T, self.mask.T, self.node_labels)


@dataclass(frozen=True)
class NodeFeatureMatrix:
    values: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix width does not match feature_names")
        if not np.all(np.isfinite(values)):
            raise ValueError("node features must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def to_csv(self, path, node_labels: Sequence[str] | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", *self.feature_names])
            labels = node_labels or [str(i) for i in range(len(self.values))]
            for label, row in zip(labels, self.values):
                w.writerow([label, *(repr(float(v)) for v in row)])
        return path


def binarize(ec: ECMatrix | np.ndarray, threshold: float = 1.0,
             node_labels: Sequence[str] = ()) -> DirectedGraph:
    """Keep edge (x, y) iff |score| >= threshold; kept edges retain their weight."""
    scores = ec.scores if isinstance(ec, ECMatrix) else np.asarray(ec, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("EC matrix contains non-finite values")
    mask = np.abs(scores) >= threshold
    return DirectedGraph(scores, mask, tuple(node_labels))


def _undirected_neighbors(mask: np.ndarray) -> np.ndarray:
    return mask | mask.T


def ldp_features(g: DirectedGraph) -> NodeFeatureMatrix:
    mask = g.mask
    n = g.n_nodes
    in_deg = mask.sum(axis=0).astype(float)
    out_deg = mask.sum(axis=1).astype(float)
    nbr = _undirected_neighbors(mask)
    out = np.zeros((n, 10))
    out[:, 0] = in_deg
    out[:, 1] = out_deg
    for v in range(n):
        idx = np.flatnonzero(nbr[v])
        if idx.size == 0:
            continue
        for col, deg in ((2, in_deg[idx]), (6, out_deg[idx])):
            out[v, col:col + 4] = deg.min(), deg.max(), deg.mean(), deg.std()
    return NodeFeatureMatrix(out, LDP_NAMES)


def edge_betweenness(g: DirectedGraph) -> np.ndarray:
    """Edge betweenness on the unweighted digraph, as an N x N matrix.

    Each ordered pair (s, t) with t reachable from s contributes the fraction
    of its shortest paths that use the edge; the total is divided by the
    number of such reachable pairs.  Brandes' accumulation is used.
    """
    mask = g.mask
    n = g.n_nodes
    succ = [np.flatnonzero(mask[v]) for v in range(n)]
    eb = np.zeros((n, n))
    reachable_pairs = 0
    for s in range(n):
        dist = np.full(n, -1)
        sigma = np.zeros(n)
        preds: list[list[int]] = [[] for _ in range(n)]
        dist[s] = 0
        sigma[s] = 1.0
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for w in succ[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        reachable_pairs += len(order) - 1
        dep = np.zeros(n)
        for w in reversed(order):
            for v in preds[w]:
                c = sigma[v] / sigma[w] * (1.0 + dep[w])
                eb[v, w] += c
                dep[v] += c
    if reachable_pairs:
        eb /= reachable_pairs
    return eb


def _closed_neighborhoods(mask: np.ndarray) -> list[set]:
    nbr = _undirected_neighbors(mask)
    return [set(np.flatnonzero(nbr[v]).tolist()) | {v} for v in range(mask.shape[0])]


def ltp_features(g: DirectedGraph) -> NodeFeatureMatrix:
    """LDP plus mean incident edge betweenness, mean closed-neighbourhood
    Jaccard overlap with each neighbour, and the fraction of neighbours with
    lower (undirected) degree."""
    ldp = ldp_features(g).values
    mask = g.mask
    n = g.n_nodes
    eb = edge_betweenness(g)
    nbr = _undirected_neighbors(mask)
    deg = nbr.sum(axis=1)
    closed = _closed_neighborhoods(mask)
    extra = np.zeros((n, 3))
    for v in range(n):
        incident = np.concatenate([eb[v][mask[v]], eb[:, v][mask[:, v]]])
        if incident.size:
            extra[v, 0] = incident.mean()
        idx = np.flatnonzero(nbr[v])
        if idx.size:
            extra[v, 1] = np.mean([len(closed[v] & closed[u]) / len(closed[v] | closed[u])
                                   for u in idx])
            extra[v, 2] = np.mean(deg[idx] < deg[v])
    return NodeFeatureMatrix(np.hstack([ldp, extra]), LTP_NAMES)


def flatten_for_forest(features: NodeFeatureMatrix | Sequence[NodeFeatureMatrix],
                       pooling: str = "flatten") -> np.ndarray:
    """Row-major node-by-feature vector (or the node mean with ``pooling='mean'``).

    A sequence of matrices gives a 2-D design matrix, one row per subject.
    """
    if isinstance(features, NodeFeatureMatrix):
        if pooling == "mean":
            return features.values.mean(axis=0)
        if pooling != "flatten":
            raise ValueError(f"unknown pooling {pooling!r}")
        return features.values.reshape(-1)
    shapes = {f.values.shape for f in features}
    if len(shapes) > 1:
        raise DataError(f"node-feature shapes differ across the cohort: {sorted(shapes)}")
    return np.stack([flatten_for_forest(f, pooling) for f in features])


def unflatten(vector, n_nodes: int, feature_names=LTP_NAMES) -> NodeFeatureMatrix:
    return NodeFeatureMatrix(np.asarray(vector, dtype=float).reshape(n_nodes, -1), feature_names)
