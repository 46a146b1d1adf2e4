"""Two-layer message-passing network for directed graph classification.

Each layer computes, for every node i,

    h_i' = relu(W_self^T h_i + W_agg^T AGG_{j -> i}(h_j) + b)

where AGG runs over in-neighbours (mean by default).  Node states are mean
pooled and passed through an affine readout and a logistic.  Gradients are
derived by hand; ``gcn_gradient_check`` compares them with finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import CompatibilityError, DataError
from ..graph import DirectedGraph, NodeFeatureMatrix
from .metrics import balanced_class_weights

PARAM_NAMES = ("w_self1", "w_agg1", "b1", "w_self2", "w_agg2", "b2", "w_out", "b_out")
FORMAT_VERSION = 1


@dataclass
class GcnModel:
    params: dict
    aggregator: str = "mean"
    # positive per-column divisors applied to the input features
    feature_scale: np.ndarray | None = None
    history: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.params["w_self1"].shape[0]

    @property
    def hidden_dims(self) -> tuple[int, int]:
        return self.params["w_self1"].shape[1], self.params["w_self2"].shape[1]

    def copy(self) -> "GcnModel":
        scale = None if self.feature_scale is None else self.feature_scale.copy()
        return GcnModel({k: np.array(v, copy=True) for k, v in self.params.items()},
                        self.aggregator, scale, dict(self.history))

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "gcn",
            "aggregator": self.aggregator,
            "feature_scale": None if self.feature_scale is None else self.feature_scale.tolist(),
            "params": {k: {"shape": list(np.shape(v)), "values": np.ravel(v).tolist()}
                       for k, v in self.params.items()},
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GcnModel":
        if d.get("format_version") != FORMAT_VERSION or d.get("kind") != "gcn":
            raise CompatibilityError("not a supported GCN model file")
        params = {k: np.array(v["values"], dtype=float).reshape(v["shape"])
                  for k, v in d["params"].items()}
        scale = d.get("feature_scale")
        return cls(params, d.get("aggregator", "mean"),
                   None if scale is None else np.array(scale), d.get("history", {}))


def init_gcn(input_dim: int = 10, hidden_dims=(16, 16), seed: int = 0,
             aggregator: str = "mean") -> GcnModel:
    """Glorot-uniform weights, zero biases."""
    if aggregator not in ("mean", "sum", "max"):
        raise ValueError(f"unknown aggregator {aggregator!r}")
    rng = np.random.default_rng(seed)
    d1, d2 = hidden_dims

    def glorot(a, b):
        lim = np.sqrt(6.0 / (a + b))
        return rng.uniform(-lim, lim, size=(a, b))

    params = {
        "w_self1": glorot(input_dim, d1), "w_agg1": glorot(input_dim, d1), "b1": np.zeros(d1),
        "w_self2": glorot(d1, d2), "w_agg2": glorot(d1, d2), "b2": np.zeros(d2),
        "w_out": glorot(d2, 1)[:, 0], "b_out": np.zeros(()),
    }
    return GcnModel(params, aggregator)


@dataclass
class GraphBatch:
    """Stacked graphs: ``mask`` is (B, N, N) with mask[b, j, i] for edge j -> i,
    ``x`` is (B, N, d)."""

    mask: np.ndarray
    x: np.ndarray

    @classmethod
    def from_graphs(cls, graphs: Sequence[DirectedGraph],
                    features: Sequence[NodeFeatureMatrix | np.ndarray]) -> "GraphBatch":
        if len(graphs) != len(features):
            raise ValueError("graphs and features differ in length")
        sizes = {g.n_nodes for g in graphs}
        if len(sizes) != 1:
            raise DataError("graphs in a batch must share the node count")
        x = np.stack([np.asarray(getattr(f, "values", f), dtype=float) for f in features])
        if x.shape[1] != graphs[0].n_nodes:
            raise ValueError("feature rows do not match node count")
        return cls(np.stack([g.mask for g in graphs]).astype(float), x)

    def __len__(self):
        return self.x.shape[0]

    def subset(self, idx) -> "GraphBatch":
        return GraphBatch(self.mask[idx], self.x[idx])


def _mean_operator(mask: np.ndarray, aggregator: str) -> np.ndarray:
    """(B, N, N) operator P with agg = P @ h, P[b, i, j] for edge j -> i."""
    incoming = mask.transpose(0, 2, 1)
    if aggregator == "sum":
        return incoming
    deg = incoming.sum(axis=2, keepdims=True)
    return np.divide(incoming, deg, out=np.zeros_like(incoming), where=deg > 0)


def _aggregate(op, mask, h, aggregator):
    """Returns (agg, argmax) where argmax is only set for the max aggregator."""
    if aggregator != "max":
        return op @ h, None
    incoming = mask.transpose(0, 2, 1)[..., None] > 0  # (B, Ni, Nj, 1)
    vals = np.where(incoming, h[:, None, :, :], -np.inf)
    arg = vals.argmax(axis=2)  # (B, Ni, d)
    agg = np.take_along_axis(vals, arg[:, :, None, :], axis=2)[:, :, 0, :]
    has = incoming.any(axis=2)  # (B, Ni, 1)
    agg = np.where(has, agg, 0.0)
    return agg, (arg, has)


def _aggregate_backward(op, dagg, cache, aggregator, n_nodes):
    if aggregator != "max":
        return op.transpose(0, 2, 1) @ dagg
    arg, has = cache
    dagg = np.where(has, dagg, 0.0)
    b, ni, d = dagg.shape
    dh = np.zeros((b, n_nodes, d))
    bi = np.arange(b)[:, None, None]
    di = np.arange(d)[None, None, :]
    np.add.at(dh, (np.broadcast_to(bi, arg.shape), arg, np.broadcast_to(di, arg.shape)), dagg)
    return dh


def _scaled_input(model: GcnModel, x: np.ndarray) -> np.ndarray:
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"features have width {x.shape[-1]}, model expects {model.input_dim}")
    return x if model.feature_scale is None else x / model.feature_scale


def _forward(model: GcnModel, batch: GraphBatch):
    p = model.params
    x = _scaled_input(model, batch.x)
    op = _mean_operator(batch.mask, model.aggregator)
    a1, c1 = _aggregate(op, batch.mask, x, model.aggregator)
    z1 = x @ p["w_self1"] + a1 @ p["w_agg1"] + p["b1"]
    h1 = np.maximum(z1, 0.0)
    a2, c2 = _aggregate(op, batch.mask, h1, model.aggregator)
    z2 = h1 @ p["w_self2"] + a2 @ p["w_agg2"] + p["b2"]
    h2 = np.maximum(z2, 0.0)
    pooled = h2.mean(axis=1)
    logit = pooled @ p["w_out"] + p["b_out"]
    cache = dict(x=x, op=op, a1=a1, c1=c1, z1=z1, h1=h1, a2=a2, c2=c2, z2=z2, pooled=pooled)
    return logit, cache


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def gcn_predict(model: GcnModel, batch: GraphBatch) -> np.ndarray:
    logit, _ = _forward(model, batch)
    return _sigmoid(logit)


def gcn_forward(model: GcnModel, graph: DirectedGraph, features) -> float:
    """Probability of the positive class for a single graph."""
    values = np.asarray(getattr(features, "values", features), dtype=float)
    if values.shape[0] != graph.n_nodes:
        raise ValueError("feature rows do not match node count")
    return float(gcn_predict(model, GraphBatch(graph.mask[None].astype(float), values[None]))[0])


def weighted_bce(model: GcnModel, batch: GraphBatch, y, sample_weight=None,
                 grad: bool = False):
    """Mean of w_i * BCE_i; with ``grad`` also returns parameter gradients."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    logit, c = _forward(model, batch)
    # softplus(z) - y z, computed stably
    losses = np.logaddexp(0.0, logit) - y * logit
    loss = float(np.mean(w * losses))
    if not grad:
        return loss
    p = model.params
    B, N, _ = batch.x.shape
    dlogit = w * (_sigmoid(logit) - y) / B
    g = {"w_out": c["pooled"].T @ dlogit, "b_out": np.asarray(dlogit.sum())}
    dh2 = np.broadcast_to((dlogit[:, None] * p["w_out"][None, :])[:, None, :] / N,
                          c["z2"].shape)
    dz2 = dh2 * (c["z2"] > 0)
    g["w_self2"] = np.einsum("bnd,bne->de", c["h1"], dz2)
    g["w_agg2"] = np.einsum("bnd,bne->de", c["a2"], dz2)
    g["b2"] = dz2.sum(axis=(0, 1))
    dh1 = dz2 @ p["w_self2"].T + _aggregate_backward(c["op"], dz2 @ p["w_agg2"].T, c["c2"],
                                                     model.aggregator, N)
    dz1 = dh1 * (c["z1"] > 0)
    g["w_self1"] = np.einsum("bnd,bne->de", c["x"], dz1)
    g["w_agg1"] = np.einsum("bnd,bne->de", c["a1"], dz1)
    g["b1"] = dz1.sum(axis=(0, 1))
    return loss, g


def gcn_train(batch: GraphBatch, y, epochs: int = 150, lr: float = 0.005,
              class_weights: dict | str | None = "balanced", seed: int = 0,
              hidden_dims=(16, 16), aggregator: str = "mean", optimizer: str = "adam",
              validation: tuple[GraphBatch, np.ndarray] | None = None) -> GcnModel:
    """Full-batch training on class-weighted binary cross-entropy."""
    y = np.asarray(y, dtype=int)
    if len(np.unique(y)) < 2:
        raise DataError("GCN training set holds a single class")
    if class_weights == "balanced":
        class_weights = balanced_class_weights(y)
    cw = class_weights or {0: 1.0, 1: 1.0}
    sw = np.array([cw[int(c)] for c in y])
    model = init_gcn(batch.x.shape[2], hidden_dims, seed, aggregator)
    scale = np.abs(batch.x).reshape(-1, batch.x.shape[2]).max(axis=0)
    model.feature_scale = np.where(scale > 0, scale, 1.0)
    if optimizer not in ("adam", "sgd"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    m = {k: np.zeros_like(v) for k, v in model.params.items()}
    v = {k: np.zeros_like(val) for k, val in model.params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    train_loss, val_loss = [], []
    for epoch in range(1, epochs + 1):
        loss, grads = weighted_bce(model, batch, y, sw, grad=True)
        train_loss.append(loss)
        if validation is not None:
            vb, vy = validation
            vw = np.array([cw[int(c)] for c in vy])
            val_loss.append(weighted_bce(model, vb, vy, vw))
        for k, gk in grads.items():
            if optimizer == "sgd":
                model.params[k] = model.params[k] - lr * gk
                continue
            m[k] = beta1 * m[k] + (1 - beta1) * gk
            v[k] = beta2 * v[k] + (1 - beta2) * gk * gk
            mhat = m[k] / (1 - beta1 ** epoch)
            vhat = v[k] / (1 - beta2 ** epoch)
            model.params[k] = model.params[k] - lr * mhat / (np.sqrt(vhat) + eps)
    model.history = {"train_loss": train_loss, "val_loss": val_loss, "epochs": epochs,
                     "lr": lr, "seed": seed, "optimizer": optimizer}
    return model


def _flat_params(model: GcnModel):
    keys, sizes = [], []
    for k in PARAM_NAMES:
        keys.append(k)
        sizes.append(np.size(model.params[k]))
    return keys, np.cumsum([0] + sizes)


def gcn_gradient_check(model: GcnModel, batch: GraphBatch, y, epsilon: float = 1e-6,
                       n_probes: int = 50, seed: int = 0, sample_weight=None,
                       return_details: bool = False):
    """Max relative error between analytic and central-difference gradients
    over ``n_probes`` randomly chosen scalar parameters.

    Relative error is |a - f| / max(|a|, |f|, 1e-6); the floor keeps
    vanishing gradients from being judged on noise.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError("epsilon must lie in [1e-7, 1e-3]")
    _, analytic = weighted_bce(model, batch, y, sample_weight, grad=True)
    keys, offsets = _flat_params(model)
    total = offsets[-1]
    rng = np.random.default_rng(seed)
    probes = rng.choice(total, size=min(n_probes, total), replace=False)
    work = model.copy()
    rows = []
    for flat in probes:
        ki = int(np.searchsorted(offsets, flat, side="right") - 1)
        key = keys[ki]
        local = int(flat - offsets[ki])
        arr = work.params[key]
        view = arr.reshape(-1)
        orig = view[local]
        view[local] = orig + epsilon
        lp = weighted_bce(work, batch, y, sample_weight)
        view[local] = orig - epsilon
        lm = weighted_bce(work, batch, y, sample_weight)
        view[local] = orig
        fd = (lp - lm) / (2 * epsilon)
        an = float(np.reshape(analytic[key], -1)[local])
        rel = abs(an - fd) / max(abs(an), abs(fd), 1e-6)
        rows.append((key, local, an, fd, rel))
    worst = max(r[4] for r in rows)
    return (worst, rows) if return_details else worst


def save_model(model: GcnModel, path, **extra) -> Path:
    path = Path(path)
    payload = model.to_dict()
    payload.update(extra)
    path.write_text(json.dumps(payload))
    return path
