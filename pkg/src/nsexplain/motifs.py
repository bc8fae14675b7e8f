"""Nitrobenzene motif detection and the molecule dataset filter.

Molecules are graphs whose node features one-hot encode atom species. The
motif of interest is a six-carbon ring with an attached nitrogen bonded to
two oxygens (9 edges per occurrence: 6 ring + C-N + 2 N-O). Bond types are
ignored; only structural presence matters.
"""

from __future__ import annotations

import itertools
import random

import numpy as np

from .errors import UsageError
from .graphs import Dataset, GRAPH_TASK, Graph, canonical_edge

RING_SIZE = 6


def atom_indices(graph: Graph) -> list[int]:
    """Per-node feature-column index; features must be one-hot rows."""
    feats = graph.features.to_numpy()
    is_one = feats == 1.0
    is_zero = feats == 0.0
    if not ((is_one.sum(axis=1) == 1) & (is_zero.sum(axis=1) == feats.shape[1] - 1)).all():
        raise UsageError("features lack a one-hot atom-species encoding")
    return [int(i) for i in is_one.argmax(axis=1)]


def find_nitrobenzene(
    graph: Graph, carbon: int = 0, nitrogen: int = 1, oxygen: int = 2
) -> set[frozenset[tuple[int, int]]]:
    """All nitrobenzene occurrences, one frozenset of 9 undirected edges each.

    ``carbon``/``nitrogen``/``oxygen`` give the feature columns encoding
    those atom species.
    """
    atoms = atom_indices(graph)
    adj = graph.adjacency.to_numpy()
    n = graph.n
    neighbor = [set(int(v) for v in np.nonzero(adj[u])[0]) for u in range(n)]
    carbons = [i for i in range(n) if atoms[i] == carbon]
    carbon_set = set(carbons)

    rings: set[tuple[int, ...]] = set()
    # simple 6-cycles through carbons only; canonical form starts at the
    # smallest node and fixes direction, so each ring is found once
    for start in carbons:
        stack = [(start, (start,))]
        while stack:
            node, path = stack.pop()
            if len(path) == RING_SIZE:
                if start in neighbor[node] and path[1] < path[-1]:
                    rings.add(path)
                continue
            for nxt in neighbor[node]:
                if nxt in carbon_set and nxt > start and nxt not in path:
                    stack.append((nxt, path + (nxt,)))

    matches: set[frozenset[tuple[int, int]]] = set()
    for ring in rings:
        ring_edges = {
            canonical_edge(ring[i], ring[(i + 1) % RING_SIZE]) for i in range(RING_SIZE)
        }
        for c in ring:
            for nb in neighbor[c]:
                if atoms[nb] != nitrogen:
                    continue
                oxy = sorted(o for o in neighbor[nb] if atoms[o] == oxygen)
                for o1, o2 in itertools.combinations(oxy, 2):
                    edges = set(ring_edges)
                    edges.add(canonical_edge(c, nb))
                    edges.add(canonical_edge(nb, o1))
                    edges.add(canonical_edge(nb, o2))
                    matches.add(frozenset(edges))
    return matches


def filter_mutag0(
    dataset: Dataset,
    carbon: int = 0,
    nitrogen: int = 1,
    oxygen: int = 2,
    mutagenic_label: int = 1,
    split_seed: int = 0,
) -> Dataset:
    """Keep molecules whose label agrees with nitrobenzene presence.

    A molecule survives if it contains the motif and is mutagenic, or lacks
    the motif and is non-mutagenic. Kept mutagens get the union of their
    motif edges as ground truth. The train/test split is redrawn (seeded)
    over the surviving molecules to keep the 4:1 ratio.
    """
    if dataset.task != GRAPH_TASK:
        raise UsageError("the molecule filter applies to graph-classification datasets")
    kept: list[Graph] = []
    for g in dataset.graphs:
        matches = find_nitrobenzene(g, carbon, nitrogen, oxygen)
        is_mutagen = g.label == mutagenic_label
        if matches and is_mutagen:
            gt = frozenset(e for match in matches for e in match)
            kept.append(
                Graph(adjacency=g.adjacency, features=g.features, label=g.label, gt_edges=gt)
            )
        elif not matches and not is_mutagen:
            kept.append(Graph(adjacency=g.adjacency, features=g.features, label=g.label))
    if not kept:
        raise UsageError("no molecules satisfy the filter")
    rng = random.Random(split_seed)
    order = list(range(len(kept)))
    rng.shuffle(order)
    train_count = round(0.8 * len(kept))
    meta = dict(dataset.meta)
    meta.update({"name": "mutag0", "source_graphs": len(dataset.graphs), "kept": len(kept)})
    return Dataset(
        task=GRAPH_TASK,
        num_classes=dataset.num_classes,
        feature_dim=dataset.feature_dim,
        graphs=tuple(kept),
        train_idx=tuple(order[:train_count]),
        test_idx=tuple(order[train_count:]),
        meta=meta,
    )
