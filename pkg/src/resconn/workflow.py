"""Glue from EC matrices to classifier inputs.

A fitted graph model bundles the control-group standardization, the
binarization threshold, the node-feature profile and the classifier, so the
same object scores raw EC matrices and explains perturbed graphs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classifiers.forest import ForestModel, rf_predict, rf_train
from .classifiers.gcn import GcnModel, GraphBatch, gcn_predict, gcn_train
from .ecmatrix import ECMatrix
from .errors import CompatibilityError
from .graph import DirectedGraph, binarize, flatten_for_forest, ldp_features, ltp_features
from .timeseries import StandardizationStats, control_stats, zscore_edges

PROFILES = {"ldp": ldp_features, "ltp": ltp_features}


def node_features(graph: DirectedGraph, profile: str):
    try:
        return PROFILES[profile](graph)
    except KeyError:
        raise ValueError(f"unknown feature profile {profile!r}") from None


@dataclass
class FittedGraphModel:
    kind: str  # "gcn" or "forest"
    stats: StandardizationStats
    threshold: float
    profile: str
    model: GcnModel | ForestModel
    pooling: str = "flatten"
    n_nodes: int = 0

    @property
    def history(self) -> dict:
        return getattr(self.model, "history", {}) or {}

    def graphs(self, ecs: Sequence[ECMatrix]) -> list[DirectedGraph]:
        for ec in ecs:
            if ec.n_nodes != self.n_nodes:
                raise CompatibilityError(f"model expects {self.n_nodes} nodes, "
                                         f"EC of {ec.subject_id!r} has {ec.n_nodes}")
        return [binarize(z, self.threshold) for z in zscore_edges(ecs, self.stats)]

    def predict_graphs(self, graphs: Sequence[DirectedGraph]) -> np.ndarray:
        feats = [node_features(g, self.profile) for g in graphs]
        if self.kind == "gcn":
            return gcn_predict(self.model, GraphBatch.from_graphs(graphs, feats))
        return rf_predict(self.model, flatten_for_forest(feats, self.pooling))

    def predict_graph(self, graph: DirectedGraph) -> float:
        return float(self.predict_graphs([graph])[0])

    def predict(self, ecs: Sequence[ECMatrix]) -> np.ndarray:
        return self.predict_graphs(self.graphs(ecs))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "threshold": self.threshold, "profile": self.profile,
                "pooling": self.pooling, "n_nodes": self.n_nodes,
                "stats": {"mean": self.stats.mean.tolist(), "std": self.stats.std.tolist(),
                          "floor": self.stats.floor},
                "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "FittedGraphModel":
        try:
            kind = d["kind"]
            model = GcnModel.from_dict(d["model"]) if kind == "gcn" else \
                ForestModel.from_dict(d["model"])
            s = d["stats"]
            stats = StandardizationStats(np.array(s["mean"]), np.array(s["std"]), s["floor"])
            return cls(kind, stats, d["threshold"], d["profile"], model, d.get("pooling", "flatten"),
                       d["n_nodes"])
        except (KeyError, TypeError) as exc:
            raise CompatibilityError(f"malformed model file: missing {exc}") from exc


@dataclass
class GraphModelSpec:
    """How to turn training EC matrices into a fitted classifier.

    ``standardization='fold'`` estimates control statistics from the training
    subjects only; ``'global'`` uses ``global_stats`` supplied by the caller.
    """

    kind: str = "gcn"
    threshold: float = 1.0
    profile: str | None = None
    standardization: str = "fold"
    global_stats: StandardizationStats | None = None
    pooling: str = "flatten"
    epochs: int = 150
    lr: float = 0.005
    hidden_dims: tuple = (16, 16)
    aggregator: str = "mean"
    optimizer: str = "adam"
    n_trees: int = 100
    max_depth: int = 2
    max_features: int = 5
    name: str = field(default="")

    def __post_init__(self):
        if self.kind not in ("gcn", "forest"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.profile is None:
            self.profile = "ldp" if self.kind == "gcn" else "ltp"
        if not self.name:
            self.name = f"{self.kind}-{self.profile}"
        if self.standardization not in ("fold", "global"):
            raise ValueError("standardization must be 'fold' or 'global'")

    def _stats(self, ecs, y):
        if self.standardization == "global":
            if self.global_stats is None:
                raise ValueError("global standardization needs global_stats")
            return self.global_stats
        return control_stats([ec for ec, c in zip(ecs, y) if c == 0])

    def fit(self, ecs: Sequence[ECMatrix], y, seed: int = 0, validation=None) -> FittedGraphModel:
        y = np.asarray(y).astype(int)
        stats = self._stats(ecs, y)
        shell = FittedGraphModel(self.kind, stats, self.threshold, self.profile, None,
                                 self.pooling, ecs[0].n_nodes)
        graphs = shell.graphs(ecs)
        feats = [node_features(g, self.profile) for g in graphs]
        if self.kind == "gcn":
            val = None
            if validation is not None and len(validation[1]):
                vg = shell.graphs(validation[0])
                vb = GraphBatch.from_graphs(vg, [node_features(g, self.profile) for g in vg])
                val = (vb, np.asarray(validation[1]))
            shell.model = gcn_train(GraphBatch.from_graphs(graphs, feats), y, self.epochs,
                                    self.lr, "balanced", seed, self.hidden_dims,
                                    self.aggregator, self.optimizer, val)
        else:
            shell.model = rf_train(flatten_for_forest(feats, self.pooling), y, self.n_trees,
                                   self.max_depth, self.max_features, "balanced", seed)
        return shell

    def predict(self, fitted: FittedGraphModel, ecs: Sequence[ECMatrix]) -> np.ndarray:
        return fitted.predict(ecs)
