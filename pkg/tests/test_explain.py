import json

import numpy as np
import pytest

from resconn.errors import NumericalError
from resconn.explain import (
    Atlas,
    AtlasError,
    aggregate_roi,
    lime_explain,
    map_to_networks,
    read_atlas,
    threshold_rois,
    write_atlas,
    write_edge_coefficients,
    write_network_histogram,
    write_roi_scores,
)
from resconn.graph import DirectedGraph


def dense_graph(n=5, seed=0, p=0.6):
    rng = np.random.default_rng(seed)
    m = rng.random((n, n)) < p
    np.fill_diagonal(m, False)
    return DirectedGraph(m * rng.uniform(1, 2, (n, n)))


def linear_fn(weights):
    return lambda g: 0.5 + float((weights * g.mask).sum())


def test_linear_oracle_recovery():
    g = dense_graph(6, seed=1)
    w = np.random.default_rng(2).normal(0, 0.02, (6, 6)) * g.mask
    exp = lime_explain(linear_fn(w), g, n_samples=1000, seed=0)
    present = g.mask
    r = np.corrcoef(exp.edge_coefficients[present], w[present])[0, 1]
    assert r > 0.95
    assert exp.fidelity > 0.99


def test_constant_predictor():
    exp = lime_explain(lambda g: 0.3, dense_graph(), n_samples=500, seed=0)
    assert not exp.edge_coefficients.any()
    assert exp.fidelity == 1.0 and exp.zero_variance


def test_locality_and_support():
    g = dense_graph(5, seed=3)
    w = np.random.default_rng(4).normal(0, 0.05, (5, 5))
    fn = linear_fn(w)
    exp = lime_explain(fn, g, n_samples=400, seed=1)
    assert exp.prediction == fn(g)
    assert not exp.edge_coefficients[~g.mask].any()
    assert np.all(np.diag(exp.edge_coefficients) == 0)


def test_ignored_edge_vanishes():
    g = dense_graph(5, seed=5)
    edges = g.edges()
    w = np.zeros((5, 5))
    for i, j in edges[1:]:
        w[i, j] = 0.05
    ignored = edges[0]
    exp = lime_explain(linear_fn(w), g, n_samples=5000, seed=2)
    coef = np.abs(exp.edge_coefficients)
    assert coef[ignored] < 0.05 * coef.max()


def test_determinism_and_bad_inputs():
    g = dense_graph(4, seed=6)
    fn = linear_fn(np.ones((4, 4)) * 0.01)
    a = lime_explain(fn, g, n_samples=300, seed=7)
    b = lime_explain(fn, g, n_samples=300, seed=7)
    assert np.array_equal(a.edge_coefficients, b.edge_coefficients)
    with pytest.raises(NumericalError, match="sample"):
        lime_explain(lambda h: float("nan"), g, n_samples=300)
    with pytest.raises(ValueError):
        lime_explain(fn, DirectedGraph(np.zeros((3, 3))))
    with pytest.raises(ValueError):
        lime_explain(fn, g, n_samples=g.n_edges * 10 - 1)


def test_nonlinear_classifier_ranks_planted_edge():
    g = dense_graph(6, seed=8)
    planted = g.edges()[3]
    fn = lambda h: 1 / (1 + np.exp(-(4.0 * h.mask[planted] - 2.0 + 0.1 * h.n_edges / 10)))
    exp = lime_explain(fn, g, n_samples=1000, seed=0)
    top = exp.ranked_edges()[0]
    assert (top[0], top[1]) == planted


def test_aggregate_roi_examples():
    c = np.zeros((3, 3))
    c[0, 2] = 0.4
    assert aggregate_roi(c).tolist() == [0.4, 0.0, 0.0]
    assert aggregate_roi(c, "in").tolist() == [0.0, 0.0, 0.4]
    a = np.array([[0, 1.0, -2.0], [-1.0, 0, 3.0], [2.0, -3.0, 0]])
    assert aggregate_roi(a).tolist() == [-1.0, 2.0, -1.0]
    assert not aggregate_roi(np.zeros((4, 4))).any()
    with pytest.raises(ValueError):
        aggregate_roi(c, "both")


def test_threshold_rois():
    assert threshold_rois([0.03, -0.03, 0.0]) == ({0}, {1})
    assert threshold_rois([0.01, -0.019]) == (set(), set())
    with pytest.raises(ValueError):
        threshold_rois([0.1], 0.0, 0.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = rng.normal(0, 0.05, 20)
        pos, neg = sorted(rng.normal(0, 0.05, 2))[::-1]
        if pos > neg:
            a, b = threshold_rois(s, pos, neg)
            assert not a & b


def test_map_to_networks():
    nets = ["Visual", "DorsalAttention", "DorsalAttention", "DorsalAttention"]
    assert map_to_networks(set(), nets) == {}
    assert map_to_networks({1, 2, 3}, nets) == {"DorsalAttention": 3}
    h = map_to_networks({0, 1, 2}, nets)
    assert sum(h.values()) == 3
    with pytest.raises(AtlasError, match="7"):
        map_to_networks({7}, nets)


def test_atlas_round_trip(tmp_path):
    atlas = Atlas(("a", "b"), ("L", "R"), ("Visual", "Default"))
    assert read_atlas(write_atlas(atlas, tmp_path / "atlas.csv")) == atlas
    (tmp_path / "bad.csv").write_text("node_index,node_name\n0,a\n")
    with pytest.raises(AtlasError):
        read_atlas(tmp_path / "bad.csv")


def test_exports(tmp_path):
    g = dense_graph(4, seed=9)
    exp = lime_explain(linear_fn(np.full((4, 4), 0.03)), g, n_samples=300, seed=0)
    rows = write_edge_coefficients(exp, tmp_path / "e.csv").read_text().splitlines()
    assert rows[0] == "source,target,coefficient" and len(rows) == g.n_edges + 1
    roi = write_roi_scores([0.05, -0.05, 0.0], tmp_path / "r.csv").read_text().splitlines()
    assert roi[1].endswith(",stroke") and roi[2].endswith(",control") and roi[3].endswith(",")
    h = json.loads(write_network_histogram({}, tmp_path / "h.json", pos=0.02, neg=-0.02).read_text())
    assert h == {"neg": -0.02, "pos": 0.02}
