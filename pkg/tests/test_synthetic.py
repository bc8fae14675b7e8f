from collections import Counter

import pytest

from nsexplain.synthetic import generate_ba_shapes, generate_tree_cycles


@pytest.fixture(scope="module")
def ba():
    return generate_ba_shapes(0)


@pytest.fixture(scope="module")
def tc():
    return generate_tree_cycles(0)


def motif_components(graph):
    """Connected components of the ground-truth edge set: node set -> edges."""
    parent = {}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in graph.gt_edges:
        parent.setdefault(u, u)
        parent.setdefault(v, v)
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[ru] = rv
    groups = {}
    for u, v in graph.gt_edges:
        groups.setdefault(find(u), []).append((u, v))
    return groups


def test_ba_shapes_node_count_and_classes(ba):
    assert ba.task == "node"
    assert ba.num_classes == 4
    g = ba.graphs[0]
    assert g.n == 700
    counts = Counter(g.node_labels)
    assert counts[0] == 300
    assert counts[1] == 80  # one top per house
    assert counts[2] == 160  # two middles
    assert counts[3] == 160  # two bottoms


def test_ba_shapes_houses_have_six_motif_edges_each(ba):
    g = ba.graphs[0]
    groups = motif_components(g)
    assert len(groups) == 80
    for edges in groups.values():
        assert len(edges) == 6
        nodes = {u for u, _ in edges} | {v for _, v in edges}
        assert len(nodes) == 5
        labels = Counter(g.node_labels[u] for u in nodes)
        assert labels == Counter({2: 2, 3: 2, 1: 1})


def test_ba_shapes_split_ratio(ba):
    assert len(ba.train_idx) == 560
    assert len(ba.test_idx) == 140


def test_ba_shapes_deterministic():
    assert generate_ba_shapes(0).equals(generate_ba_shapes(0))
    assert not generate_ba_shapes(0).equals(generate_ba_shapes(1))


def test_tree_cycles_node_count_and_classes(tc):
    assert tc.num_classes == 2
    g = tc.graphs[0]
    assert g.n == 871
    counts = Counter(g.node_labels)
    assert counts[0] == 511
    assert counts[1] == 360


def test_tree_cycles_motifs_are_six_edge_cycles(tc):
    g = tc.graphs[0]
    groups = motif_components(g)
    assert len(groups) == 60
    for edges in groups.values():
        assert len(edges) == 6
        degree = Counter()
        for u, v in edges:
            degree[u] += 1
            degree[v] += 1
        # a single cycle: every node has degree exactly 2
        assert len(degree) == 6
        assert all(d == 2 for d in degree.values())


def test_tree_cycles_motif_lookup_per_node(tc):
    g = tc.graphs[0]
    cycle_nodes = [i for i, y in enumerate(g.node_labels) if y == 1]
    motif = g.motif_edges_for_node(cycle_nodes[0])
    assert len(motif) == 6


def test_tree_cycles_deterministic():
    assert generate_tree_cycles(0).equals(generate_tree_cycles(0))


def test_generators_report_metadata(ba, tc):
    assert ba.meta["name"] == "ba-shapes"
    assert ba.meta["seed"] == 0
    # base: 5 star edges + 294 nodes x 5; houses: 6 internal + 1 attachment; 70 random
    assert ba.meta["num_edges"] == 1475 + 80 * 7 + 70
    assert tc.meta["name"] == "tree-cycles"
    assert tc.meta["num_edges"] == 510 + 60 * 7 + 43
