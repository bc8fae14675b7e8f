import json

import numpy as np
import pytest

from nsexplain import tensor as T
from nsexplain.errors import DatasetFormatError, UsageError
from nsexplain.graphs import (
    Dataset,
    Graph,
    SubGraphInstance,
    extract_computational_subgraph,
    load_dataset,
    normalize_adjacency,
    save_dataset,
)
from nsexplain.tensor import Matrix

from oracles import bfs_ball, normalize_recompute


def graph_from_edges(n, edges, feature_dim=2, **kwargs):
    adj = np.zeros((n, n))
    for u, v in edges:
        adj[u, v] = adj[v, u] = 1.0
    return Graph(
        adjacency=Matrix.from_numpy(adj),
        features=Matrix.ones(n, feature_dim),
        **kwargs,
    )


# -- Graph invariants ---------------------------------------------------------


def test_graph_rejects_asymmetric_adjacency():
    bad = Matrix([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(UsageError, match="symmetric"):
        Graph(adjacency=bad, features=Matrix.ones(2, 1))


def test_graph_rejects_self_loops_and_fractional_entries():
    with pytest.raises(UsageError, match="diagonal"):
        Graph(adjacency=Matrix([[1.0]]), features=Matrix.ones(1, 1))
    with pytest.raises(UsageError, match="0 or 1"):
        Graph(adjacency=Matrix([[0.0, 0.5], [0.5, 0.0]]), features=Matrix.ones(2, 1))


def test_graph_rejects_ground_truth_not_in_adjacency():
    with pytest.raises(UsageError, match="missing from adjacency"):
        graph_from_edges(3, [(0, 1)], gt_edges=frozenset({(1, 2)}))


def test_motif_edges_for_node_picks_own_component():
    g = graph_from_edges(
        6,
        [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (2, 3)],
        gt_edges=frozenset({(0, 1), (1, 2), (0, 2), (3, 4), (4, 5)}),
    )
    assert g.motif_edges_for_node(1) == frozenset({(0, 1), (1, 2), (0, 2)})
    assert g.motif_edges_for_node(5) == frozenset({(3, 4), (4, 5)})
    with pytest.raises(UsageError):
        g.motif_edges_for_node(42)


# -- normalize_adjacency ------------------------------------------------------


def test_normalize_zero_matrix_is_identity():
    out = normalize_adjacency(Matrix.zeros(3, 3))
    assert out.equals(Matrix.eye(3))


def test_normalize_single_edge_closed_form():
    out = normalize_adjacency(Matrix([[0.0, 1.0], [1.0, 0.0]]))
    assert out.allclose(Matrix.full(2, 2, 0.5), rtol=0, atol=1e-15)


def test_normalize_matches_recomputation_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = int(rng.integers(2, 9))
        w = rng.uniform(0.0, 1.0, (n, n)) * rng.integers(0, 2, (n, n))
        w = np.triu(w, 1)
        w = w + w.T
        out = normalize_adjacency(Matrix.from_numpy(w)).to_numpy()
        expected = np.array(normalize_recompute(w.tolist()))
        np.testing.assert_allclose(out, expected, atol=1e-12)
        np.testing.assert_allclose(out, out.T, atol=0)
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_normalize_is_differentiable_on_tape():
    rng = np.random.default_rng(8)
    w_arr = np.array([[0.0, 0.7, 0.2], [0.7, 0.0, 0.0], [0.2, 0.0, 0.0]])
    weight = Matrix.from_numpy(rng.uniform(-1.0, 1.0, (3, 3)))
    w = Matrix.from_numpy(w_arr)
    with T.Tape() as tape:
        tape.parameter(w)
        loss = T.sum_all(T.mul(normalize_adjacency(w), weight))
    grad = tape.gradients(loss)[w].to_numpy()
    step = 1e-6
    for i, j in [(0, 1), (0, 2), (1, 2)]:
        bumped = w_arr.copy()
        bumped[i, j] += step
        bumped[j, i] += step
        hi = (normalize_adjacency(Matrix.from_numpy(bumped)).to_numpy() * weight.to_numpy()).sum()
        lo = (normalize_adjacency(Matrix.from_numpy(w_arr)).to_numpy() * weight.to_numpy()).sum()
        fd = (hi - lo) / step
        analytic = grad[i, j] + grad[j, i]  # symmetric bump hits both entries
        assert analytic == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_normalize_rejects_negative_entries():
    with pytest.raises(UsageError):
        normalize_adjacency(Matrix([[0.0, -1.0], [-1.0, 0.0]]))


# -- computational sub-graphs -------------------------------------------------


def test_subgraph_of_isolated_node():
    g = graph_from_edges(4, [(1, 2)], node_labels=(0, 0, 0, 0))
    sub = extract_computational_subgraph(g, 0, 3)
    assert sub.n == 1
    assert sub.adjacency.equals(Matrix.zeros(1, 1))
    assert sub.node_map == {0: 0}


def test_subgraph_of_path():
    # path 0-1-2-3, target 0, two hops
    g = graph_from_edges(4, [(0, 1), (1, 2), (2, 3)], node_labels=(0, 0, 0, 0))
    sub = extract_computational_subgraph(g, 0, 2)
    assert set(sub.node_map) == {0, 1, 2}
    assert sub.node_map[0] == 0
    assert sorted(sub.edges()) == [(0, 1), (1, 2)]


def test_subgraph_target_gets_local_id_zero_and_label():
    g = graph_from_edges(4, [(0, 1), (1, 2), (2, 3)], node_labels=(7 % 4, 1, 2, 3))
    sub = extract_computational_subgraph(g, 2, 1)
    assert sub.node_map[2] == 0
    assert sub.label == 2
    assert sub.target_node == 2


def test_subgraph_rejects_bad_arguments():
    g = graph_from_edges(3, [(0, 1)], node_labels=(0, 0, 0))
    with pytest.raises(UsageError):
        extract_computational_subgraph(g, 3, 2)
    with pytest.raises(UsageError):
        extract_computational_subgraph(g, 0, 0)


def test_subgraph_matches_bfs_oracle_on_random_graphs():
    rng = np.random.default_rng(12)
    for _ in range(15):
        n = int(rng.integers(2, 51))
        p = rng.uniform(0.02, 0.15)
        adj = (rng.random((n, n)) < p).astype(float)
        adj = np.triu(adj, 1)
        adj = adj + adj.T
        g = Graph(
            adjacency=Matrix.from_numpy(adj),
            features=Matrix.ones(n, 1),
            node_labels=tuple([0] * n),
        )
        node = int(rng.integers(0, n))
        hops = int(rng.integers(1, 4))
        sub = extract_computational_subgraph(g, node, hops)
        assert set(sub.node_map) == bfs_ball(adj.tolist(), node, hops)
        # induced edges only
        inv = {local: orig for orig, local in sub.node_map.items()}
        for u, v in sub.edges():
            assert adj[inv[u], inv[v]] == 1.0


def test_subgraph_to_original_round_trip():
    g = graph_from_edges(5, [(0, 4), (4, 2)], node_labels=(0,) * 5)
    sub = extract_computational_subgraph(g, 4, 1)
    originals = sub.to_original(sub.edges())
    assert sorted(originals) == [(0, 4), (2, 4)]


# -- dataset validation and file I/O ------------------------------------------


def node_dataset(graph, num_classes=2, train=None, test=None):
    n = graph.n
    order = list(range(n))
    cut = round(0.8 * n)
    return Dataset(
        task="node",
        num_classes=num_classes,
        feature_dim=graph.features.cols,
        graphs=(graph,),
        train_idx=tuple(train if train is not None else order[:cut]),
        test_idx=tuple(test if test is not None else order[cut:]),
    )


def test_dataset_rejects_overlapping_or_partial_splits():
    g = graph_from_edges(5, [(0, 1)], node_labels=(0,) * 5)
    with pytest.raises(UsageError, match="overlap"):
        node_dataset(g, train=[0, 1, 2, 3], test=[3, 4])
    with pytest.raises(UsageError, match="cover"):
        node_dataset(g, train=[0, 1, 2], test=[4])


def test_dataset_rejects_bad_ratio():
    g = graph_from_edges(10, [(0, 1)], node_labels=(0,) * 10)
    with pytest.raises(UsageError, match="4:1"):
        node_dataset(g, train=list(range(5)), test=list(range(5, 10)))


def test_save_load_round_trip(tmp_path):
    g = graph_from_edges(
        5,
        [(0, 1), (1, 2), (0, 3)],
        node_labels=(0, 1, 1, 0, 0),
        gt_edges=frozenset({(0, 1)}),
    )
    ds = node_dataset(g)
    path = tmp_path / "tiny.json"
    save_dataset(ds, path)
    again = load_dataset(path)
    assert again.equals(ds)
    # second save is byte-identical (stable serialization)
    path2 = tmp_path / "tiny2.json"
    save_dataset(again, path2)
    assert path.read_text() == path2.read_text()


def test_load_rejects_unordered_edge_pair(tmp_path):
    path = tmp_path / "bad.json"
    doc = {
        "task": "node",
        "num_classes": 2,
        "feature_dim": 1,
        "graphs": [
            {
                "n": 2,
                "edges": [[1, 0]],
                "features": [[1.0], [1.0]],
                "node_labels": [0, 1],
            }
        ],
        "train_idx": [0],
        "test_idx": [1],
    }
    path.write_text(json.dumps(doc))
    with pytest.raises(DatasetFormatError, match=r"edges\[0\].*u < v"):
        load_dataset(path)


def test_load_rejects_out_of_range_label(tmp_path):
    path = tmp_path / "bad.json"
    doc = {
        "task": "graph",
        "num_classes": 2,
        "feature_dim": 1,
        "graphs": [{"n": 1, "edges": [], "features": [[1.0]], "label": 2}],
        "train_idx": [0],
        "test_idx": [],
    }
    path.write_text(json.dumps(doc))
    with pytest.raises(DatasetFormatError, match=r"label"):
        load_dataset(path)


def test_load_reports_json_syntax_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"task": "node",\n  broken\n}')
    with pytest.raises(DatasetFormatError, match="line 2"):
        load_dataset(path)


def test_load_rejects_duplicate_and_self_edges(tmp_path):
    base = {
        "task": "node",
        "num_classes": 2,
        "feature_dim": 1,
        "train_idx": [0, 1, 2],
        "test_idx": [3],
    }
    path = tmp_path / "bad.json"
    doc = dict(base)
    doc["graphs"] = [
        {"n": 4, "edges": [[0, 1], [0, 1]], "features": [[1.0]] * 4,
         "node_labels": [0, 0, 0, 0]}
    ]
    path.write_text(json.dumps(doc))
    with pytest.raises(DatasetFormatError, match="duplicate"):
        load_dataset(path)
    doc["graphs"] = [
        {"n": 4, "edges": [[2, 2]], "features": [[1.0]] * 4, "node_labels": [0, 0, 0, 0]}
    ]
    path.write_text(json.dumps(doc))
    with pytest.raises(DatasetFormatError, match="self-loop"):
        load_dataset(path)
