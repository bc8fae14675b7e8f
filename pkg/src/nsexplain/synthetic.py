"""Deterministic synthetic node-classification benchmarks with planted motifs.

Both generators are pure functions of the seed: repeat calls produce
bit-identical datasets. Structure parameters follow the usual convention for
these benchmarks; node counts and class layouts are fixed, while edge totals
vary slightly with the seed through the random extra edges (reported in the
dataset metadata).
"""

from __future__ import annotations

import random

from .errors import UsageError
from .graphs import Dataset, Graph, NODE_TASK, canonical_edge
from .tensor import Matrix

CONSTANT_FEATURE_DIM = 10

# house motif: one top node, two middle, two bottom; 6 edges
_HOUSE_EDGES = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4)]
_HOUSE_LABELS = [1, 2, 2, 3, 3]

BA_BASE_NODES = 300
BA_ATTACH = 5
BA_NUM_HOUSES = 80
TREE_DEPTH = 8
NUM_CYCLES = 60
CYCLE_LEN = 6


def _barabasi_albert(n: int, m: int, rng: random.Random) -> set[tuple[int, int]]:
    """Preferential-attachment graph on nodes 0..n-1, m edges per new node."""
    if not 1 <= m < n:
        raise UsageError(f"need 1 <= m < n, got m={m}, n={n}")
    edges: set[tuple[int, int]] = set()
    # star seed graph on m+1 nodes, centered at 0
    for leaf in range(1, m + 1):
        edges.add((0, leaf))
    repeated = [0] * m + list(range(1, m + 1))
    for source in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(rng.choice(repeated))
        for t in targets:
            edges.add(canonical_edge(source, t))
            repeated.append(t)
        repeated.extend([source] * m)
    return edges


def _add_random_edges(edges: set[tuple[int, int]], n: int, count: int,
                      rng: random.Random) -> None:
    added = 0
    while added < count:
        u = rng.randrange(n)
        v = rng.randrange(n)
        if u == v:
            continue
        e = canonical_edge(u, v)
        if e in edges:
            continue
        edges.add(e)
        added += 1


def _split_indices(n: int, rng: random.Random) -> tuple[tuple[int, ...], tuple[int, ...]]:
    order = list(range(n))
    rng.shuffle(order)
    train_count = round(0.8 * n)
    return tuple(order[:train_count]), tuple(order[train_count:])


def _assemble(name: str, seed: int, n: int, edges: set[tuple[int, int]],
              labels: list[int], gt: set[tuple[int, int]], num_classes: int,
              rng: random.Random) -> Dataset:
    adj = [[0.0] * n for _ in range(n)]
    for u, v in edges:
        adj[u][v] = adj[v][u] = 1.0
    graph = Graph(
        adjacency=Matrix(adj),
        features=Matrix.ones(n, CONSTANT_FEATURE_DIM),
        node_labels=tuple(labels),
        gt_edges=frozenset(gt),
    )
    train_idx, test_idx = _split_indices(n, rng)
    return Dataset(
        task=NODE_TASK,
        num_classes=num_classes,
        feature_dim=CONSTANT_FEATURE_DIM,
        graphs=(graph,),
        train_idx=train_idx,
        test_idx=test_idx,
        meta={"name": name, "seed": seed, "num_edges": len(edges)},
    )


def generate_ba_shapes(seed: int) -> Dataset:
    """A 700-node scale-free graph with 80 planted five-node house motifs.

    Base: preferential-attachment graph on 300 nodes (5 edges per new node).
    Each house (top/middle/middle/bottom/bottom, 6 internal edges) hangs off
    a uniformly random base node by one edge, and 10% of the node count is
    added as uniformly random extra edges. Labels: 0 base, 1 top, 2 middle,
    3 bottom. Ground truth per house node is its house's 6 edges. Features
    are constant all-ones vectors (structure is the only signal).
    """
    rng = random.Random(seed)
    edges = _barabasi_albert(BA_BASE_NODES, BA_ATTACH, rng)
    labels = [0] * BA_BASE_NODES
    gt: set[tuple[int, int]] = set()
    n = BA_BASE_NODES
    for _ in range(BA_NUM_HOUSES):
        base = n
        for u, v in _HOUSE_EDGES:
            edge = (base + u, base + v)
            edges.add(edge)
            gt.add(edge)
        labels.extend(_HOUSE_LABELS)
        anchor = rng.randrange(BA_BASE_NODES)
        edges.add(canonical_edge(base + 3, anchor))  # first bottom node attaches
        n += 5
    _add_random_edges(edges, n, n // 10, rng)
    return _assemble("ba-shapes", seed, n, edges, labels, gt, 4, rng)


def generate_tree_cycles(seed: int) -> Dataset:
    """A balanced binary tree of depth 8 with 60 planted six-node cycles.

    511 tree nodes plus 60 * 6 cycle nodes = 871 total. Each cycle attaches
    to a uniformly random tree node by one edge; 5% of the node count is
    added as random extra edges. Labels: 0 tree, 1 cycle. Ground truth per
    cycle node is its cycle's 6 edges.
    """
    rng = random.Random(seed)
    tree_nodes = 2 ** (TREE_DEPTH + 1) - 1
    edges: set[tuple[int, int]] = set()
    for parent in range(tree_nodes):
        for child in (2 * parent + 1, 2 * parent + 2):
            if child < tree_nodes:
                edges.add((parent, child))
    labels = [0] * tree_nodes
    gt: set[tuple[int, int]] = set()
    n = tree_nodes
    for _ in range(NUM_CYCLES):
        base = n
        ring = [(base + i, base + (i + 1) % CYCLE_LEN) for i in range(CYCLE_LEN)]
        for u, v in ring:
            edge = canonical_edge(u, v)
            edges.add(edge)
            gt.add(edge)
        labels.extend([1] * CYCLE_LEN)
        anchor = rng.randrange(tree_nodes)
        edges.add(canonical_edge(base, anchor))
        n += CYCLE_LEN
    _add_random_edges(edges, n, n // 20, rng)
    return _assemble("tree-cycles", seed, n, edges, labels, gt, 2, rng)


GENERATORS = {
    "ba-shapes": generate_ba_shapes,
    "tree-cycles": generate_tree_cycles,
}
