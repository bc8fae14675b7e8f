"""Independent brute-force oracles used to cross-check the package.

Nothing here imports from nsexplain: the point is that these routines share
no code with the paths they verify. They work from plain Python data and the
serialized JSON file formats directly.
"""

from __future__ import annotations

import itertools
import json
import math


def matmul_triple_loop(a, b):
    """Naive O(n^3) matrix product over nested lists."""
    n, k, m = len(a), len(b), len(b[0])
    assert len(a[0]) == k
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


def central_difference(f, x0, step=1e-4):
    """Central finite-difference gradient of scalar f over a flat list x0."""
    grad = []
    for i in range(len(x0)):
        hi = list(x0)
        lo = list(x0)
        hi[i] += step
        lo[i] -= step
        grad.append((f(hi) - f(lo)) / (2.0 * step))
    return grad


def bfs_ball(adjacency, start, radius):
    """Set of nodes within ``radius`` hops of ``start`` (list-of-lists adjacency)."""
    n = len(adjacency)
    dist = {start: 0}
    frontier = [start]
    while frontier:
        nxt = []
        for u in frontier:
            if dist[u] == radius:
                continue
            for v in range(n):
                if adjacency[u][v] != 0 and v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return set(dist)


def normalize_recompute(w):
    """Self-loop degree normalization recomputed entry by entry."""
    n = len(w)
    a = [[w[i][j] + (1.0 if i == j else 0.0) for j in range(n)] for i in range(n)]
    deg = [sum(row) for row in a]
    return [
        [a[i][j] / math.sqrt(deg[i] * deg[j]) for j in range(n)]
        for i in range(n)
    ]


def find_nitrobenzene_exhaustive(adjacency, atom_types):
    """All nitrobenzene matches by brute force over ordered carbon 6-tuples.

    atom_types[i] is 'C', 'N', 'O', or anything else. Returns a set of
    frozensets of undirected edges (u, v) with u < v, one per matched group
    (6 ring edges + ring-N + two N-O edges).
    """
    n = len(adjacency)
    carbons = [i for i in range(n) if atom_types[i] == "C"]
    nitrogens = [i for i in range(n) if atom_types[i] == "N"]
    oxygens = set(i for i in range(n) if atom_types[i] == "O")

    def connected(u, v):
        return adjacency[u][v] != 0

    matches = set()
    for ring in itertools.permutations(carbons, 6):
        ok = all(connected(ring[i], ring[(i + 1) % 6]) for i in range(6))
        if not ok:
            continue
        for c in ring:
            for nitro in nitrogens:
                if not connected(c, nitro):
                    continue
                n_oxy = sorted(o for o in oxygens if connected(nitro, o))
                for o1, o2 in itertools.combinations(n_oxy, 2):
                    edges = set()
                    for i in range(6):
                        u, v = ring[i], ring[(i + 1) % 6]
                        edges.add((min(u, v), max(u, v)))
                    edges.add((min(c, nitro), max(c, nitro)))
                    edges.add((min(nitro, o1), max(nitro, o1)))
                    edges.add((min(nitro, o2), max(nitro, o2)))
                    matches.add(frozenset(edges))
    return matches


# -- independent GCN forward + PN/PS replay from serialized files ------------


def _dense_from_entry(entry):
    n = entry["n"]
    a = [[0.0] * n for _ in range(n)]
    for u, v in entry["edges"]:
        a[u][v] = 1.0
        a[v][u] = 1.0
    return a


def _forward_probs(model, adjacency, features):
    """Forward pass of the checkpoint format written by the package."""
    norm = normalize_recompute(adjacency)
    h = [row[:] for row in features]
    weights = [w for w in model["weights"]]
    n_layers = model["arch"]["num_layers"]
    for li in range(n_layers):
        h = matmul_triple_loop(norm, h)
        h = matmul_triple_loop(h, weights[li])
        if li < n_layers - 1:
            h = [[x if x > 0.0 else 0.0 for x in row] for row in h]
    head = weights[n_layers]
    if model["task"] == "graph":
        rows = len(h)
        pooled = [[sum(h[i][j] for i in range(rows)) / rows for j in range(len(h[0]))]]
        logits = matmul_triple_loop(pooled, head)
    else:
        logits = matmul_triple_loop(h, head)
    probs = []
    for row in logits:
        m = max(row)
        e = [math.exp(x - m) for x in row]
        s = sum(e)
        probs.append([x / s for x in e])
    return probs


def _argmax(row):
    best = 0
    for i, x in enumerate(row):
        if x > row[best]:
            best = i
    return best


def _subgraph(adjacency, features, node, hops):
    ball = bfs_ball(adjacency, node, hops)
    order = [node] + sorted(ball - {node})
    idx = {orig: local for local, orig in enumerate(order)}
    m = len(order)
    sub_a = [[adjacency[order[i]][order[j]] for j in range(m)] for i in range(m)]
    sub_x = [features[o][:] for o in order]
    return sub_a, sub_x, idx


def replay_pn_ps(dataset_path, model_path, explanation_paths, mask_mode):
    """Recompute per-instance pn/ps bits straight from the JSON files.

    Returns (pn_bits, ps_bits) aligned with explanation_paths.
    """
    with open(dataset_path) as fh:
        data = json.load(fh)
    with open(model_path) as fh:
        model = json.load(fh)
    pn_bits = []
    ps_bits = []
    for path in explanation_paths:
        with open(path) as fh:
            expl = json.load(fh)
        if data["task"] == "node":
            entry = data["graphs"][0]
            full_a = _dense_from_entry(entry)
            adj, feats, idx = _subgraph(
                full_a, entry["features"], expl["instance"], model["arch"]["num_layers"]
            )
            target_row = 0
            kept = set(
                (idx[min(u, v)], idx[max(u, v)]) for u, v in expl["kept_edges"]
            )
        else:
            entry = data["graphs"][expl["instance"]]
            adj = _dense_from_entry(entry)
            feats = entry["features"]
            target_row = None
            kept = set((min(u, v), max(u, v)) for u, v in expl["kept_edges"])
        n = len(adj)
        d = len(feats[0])
        kept_feats = set(expl["kept_features"])

        def pick(probs):
            return _argmax(probs[0] if target_row is None else probs[target_row])

        y_hat = pick(_forward_probs(model, adj, feats))

        edges_on = mask_mode in ("edges", "both")
        feats_on = mask_mode in ("features", "both")

        masked_a = [
            [
                adj[i][j] if (not edges_on or (min(i, j), max(i, j)) in kept) else 0.0
                for j in range(n)
            ]
            for i in range(n)
        ]
        masked_x = [
            [feats[i][j] if (not feats_on or j in kept_feats) else 0.0 for j in range(d)]
            for i in range(n)
        ]
        comp_a = [
            [
                adj[i][j] if (not edges_on or (min(i, j), max(i, j)) not in kept) else 0.0
                for j in range(n)
            ]
            for i in range(n)
        ]
        comp_x = [
            [feats[i][j] if (not feats_on or j not in kept_feats) else 0.0 for j in range(d)]
            for i in range(n)
        ]
        ps_bits.append(1 if pick(_forward_probs(model, masked_a, masked_x)) == y_hat else 0)
        pn_bits.append(1 if pick(_forward_probs(model, comp_a, comp_x)) != y_hat else 0)
    return pn_bits, ps_bits
