"""Graph data model, adjacency normalization, sub-graph extraction, and file I/O.

A dataset is either a collection of labeled graphs (graph classification) or a
single graph with per-node labels (node classification). Files use one JSON
document per dataset; see :func:`save_dataset` for the schema.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DatasetFormatError, UsageError
from .tensor import Matrix

Edge = tuple[int, int]

GRAPH_TASK = "graph"
NODE_TASK = "node"


def canonical_edge(u: int, v: int) -> Edge:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True)
class Graph:
    """Undirected graph: symmetric 0/1 adjacency, node features, labels.

    ``label`` is set for graph-level classification; ``node_labels`` for
    node-level. ``gt_edges`` holds planted ground-truth motif edges (each
    undirected pair once, u < v).
    """

    adjacency: Matrix
    features: Matrix
    label: int | None = None
    node_labels: tuple[int, ...] | None = None
    gt_edges: frozenset[Edge] | None = None

    def __post_init__(self):
        a = self.adjacency.to_numpy()
        if a.shape[0] != a.shape[1]:
            raise UsageError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise UsageError("adjacency must be symmetric")
        if np.trace(a) != 0.0:
            raise UsageError("adjacency must have a zero diagonal")
        if not np.isin(a, (0.0, 1.0)).all():
            raise UsageError("adjacency entries must be 0 or 1")
        if self.features.rows != a.shape[0]:
            raise UsageError(
                f"features have {self.features.rows} rows for {a.shape[0]} nodes"
            )
        if self.node_labels is not None and len(self.node_labels) != a.shape[0]:
            raise UsageError("node_labels length must equal node count")
        if self.gt_edges:
            for u, v in self.gt_edges:
                if not (0 <= u < v < a.shape[0]):
                    raise UsageError(f"ground-truth edge ({u}, {v}) out of range")
                if a[u, v] != 1.0:
                    raise UsageError(f"ground-truth edge ({u}, {v}) missing from adjacency")

    @property
    def n(self) -> int:
        return self.adjacency.rows

    def edges(self) -> list[Edge]:
        """Existing undirected edges, each once with u < v, sorted."""
        a = self.adjacency.to_numpy()
        us, vs = np.nonzero(np.triu(a, 1))
        return [(int(u), int(v)) for u, v in zip(us, vs)]

    def neighbors(self, node: int) -> list[int]:
        return [int(v) for v in np.nonzero(self.adjacency.to_numpy()[node])[0]]

    def motif_edges_for_node(self, node: int) -> frozenset[Edge]:
        """Ground-truth edges of the motif containing ``node``.

        Motifs are the connected components of the ground-truth edge set, so
        a node's own motif is the component it belongs to.
        """
        if not self.gt_edges:
            raise UsageError("graph has no ground-truth edges")
        adj: dict[int, list[int]] = {}
        for u, v in self.gt_edges:
            adj.setdefault(u, []).append(v)
            adj.setdefault(v, []).append(u)
        if node not in adj:
            raise UsageError(f"node {node} is not part of any ground-truth motif")
        seen = {node}
        queue = deque([node])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return frozenset(e for e in self.gt_edges if e[0] in seen and e[1] in seen)


@dataclass(frozen=True)
class Dataset:
    """A classification corpus plus its train/test split.

    Graph task: ``graphs`` holds every instance and split indices refer to
    graphs. Node task: ``graphs`` holds exactly one graph and split indices
    refer to its nodes.
    """

    task: str
    num_classes: int
    feature_dim: int
    graphs: tuple[Graph, ...]
    train_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.task not in (GRAPH_TASK, NODE_TASK):
            raise UsageError(f"unknown task {self.task!r}")
        if self.task == NODE_TASK and len(self.graphs) != 1:
            raise UsageError("node-task datasets hold exactly one graph")
        for g in self.graphs:
            if g.features.cols != self.feature_dim:
                raise UsageError("feature_dim mismatch")
            if self.task == GRAPH_TASK:
                if g.label is None or not 0 <= g.label < self.num_classes:
                    raise UsageError(f"graph label {g.label} out of range")
            else:
                if g.node_labels is None:
                    raise UsageError("node-task graphs need node_labels")
                for y in g.node_labels:
                    if not 0 <= y < self.num_classes:
                        raise UsageError(f"node label {y} out of range")
        total = self.num_instances
        train, test = set(self.train_idx), set(self.test_idx)
        if train & test:
            raise UsageError("train and test indices overlap")
        if train | test != set(range(total)):
            raise UsageError("split must cover every instance exactly once")
        if abs(len(train) - 0.8 * total) > 1.0 or abs(len(test) - 0.2 * total) > 1.0:
            raise UsageError(
                f"split {len(train)}:{len(test)} is not 4:1 within one instance"
            )

    @property
    def num_instances(self) -> int:
        return self.graphs[0].n if self.task == NODE_TASK else len(self.graphs)

    def equals(self, other: "Dataset") -> bool:
        """Bit-exact equality of everything except metadata."""
        if (
            self.task != other.task
            or self.num_classes != other.num_classes
            or self.feature_dim != other.feature_dim
            or self.train_idx != other.train_idx
            or self.test_idx != other.test_idx
            or len(self.graphs) != len(other.graphs)
        ):
            return False
        for a, b in zip(self.graphs, other.graphs):
            if a.label != b.label or a.node_labels != b.node_labels:
                return False
            if a.gt_edges != b.gt_edges:
                return False
            if not a.adjacency.equals(b.adjacency) or not a.features.equals(b.features):
                return False
        return True


@dataclass(frozen=True)
class SubGraphInstance:
    """The L-hop computational sub-graph around a target node.

    Local node 0 is the target; ``node_map`` maps original ids to local ids.
    An L-layer model's prediction for the target depends only on this graph.
    """

    target_node: int
    node_map: dict[int, int]
    adjacency: Matrix
    features: Matrix
    label: int | None

    @property
    def n(self) -> int:
        return self.adjacency.rows

    def edges(self) -> list[Edge]:
        a = self.adjacency.to_numpy()
        us, vs = np.nonzero(np.triu(a, 1))
        return [(int(u), int(v)) for u, v in zip(us, vs)]

    def to_original(self, local_edges) -> list[Edge]:
        """Map local (u, v) pairs back to original node ids."""
        inv = {local: orig for orig, local in self.node_map.items()}
        return [canonical_edge(inv[u], inv[v]) for u, v in local_edges]


def extract_computational_subgraph(g: Graph, node: int, hops: int) -> SubGraphInstance:
    """Induced sub-graph on the BFS ball of radius ``hops`` around ``node``."""
    if not 0 <= node < g.n:
        raise UsageError(f"node {node} out of range for graph with {g.n} nodes")
    if hops < 1:
        raise UsageError("hops must be >= 1")
    a = g.adjacency.to_numpy()
    dist = {node: 0}
    frontier = [node]
    for depth in range(hops):
        nxt = []
        for u in frontier:
            for v in np.nonzero(a[u])[0]:
                v = int(v)
                if v not in dist:
                    dist[v] = depth + 1
                    nxt.append(v)
        frontier = nxt
    order = [node] + sorted(k for k in dist if k != node)
    node_map = {orig: local for local, orig in enumerate(order)}
    sub_a = a[np.ix_(order, order)]
    sub_x = g.features.to_numpy()[order]
    label = g.node_labels[node] if g.node_labels is not None else g.label
    return SubGraphInstance(
        target_node=node,
        node_map=node_map,
        adjacency=Matrix.from_numpy(sub_a),
        features=Matrix.from_numpy(sub_x),
        label=label,
    )


def normalize_adjacency(weighted_adjacency: Matrix) -> Matrix:
    """Self-loop degree normalization D^(-1/2) (A + I) D^(-1/2).

    Accepts weighted (e.g. mask-scaled) adjacencies; weights enter the
    degrees as-is. Built from tape primitives, so the result is recorded and
    differentiable whenever a tape is open.
    """
    arr = weighted_adjacency.to_numpy()
    if arr.shape[0] != arr.shape[1]:
        raise UsageError(f"adjacency must be square, got {arr.shape}")
    if arr.size and arr.min() < 0.0:
        raise UsageError("adjacency entries must be >= 0")
    n = arr.shape[0]
    a_tilde = T.add(weighted_adjacency, Matrix.eye(n))
    deg = T.matmul(a_tilde, Matrix.ones(n, 1))
    inv_sqrt = T.rsqrt(deg)
    return T.mul(a_tilde, T.matmul(inv_sqrt, T.transpose(inv_sqrt)))


# -- file I/O -----------------------------------------------------------------


def _graph_to_entry(g: Graph, task: str) -> dict:
    entry: dict = {
        "n": g.n,
        "edges": [[u, v] for u, v in g.edges()],
        "features": g.features.tolist(),
    }
    if task == GRAPH_TASK:
        entry["label"] = g.label
    else:
        entry["node_labels"] = list(g.node_labels or ())
    if g.gt_edges is not None:
        entry["gt_edges"] = [[u, v] for u, v in sorted(g.gt_edges)]
    return entry


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as one JSON document.

    Schema: ``{"task": "graph"|"node", "num_classes": int, "feature_dim":
    int, "graphs": [{"n", "edges", "features", "label" | "node_labels",
    "gt_edges"?}], "train_idx": [...], "test_idx": [...]}`` with every
    undirected edge listed once as [u, v], u < v. A generator may add a
    "meta" object; it is preserved but carries no semantics.
    """
    doc = {
        "task": dataset.task,
        "num_classes": dataset.num_classes,
        "feature_dim": dataset.feature_dim,
        "graphs": [_graph_to_entry(g, dataset.task) for g in dataset.graphs],
        "train_idx": list(dataset.train_idx),
        "test_idx": list(dataset.test_idx),
    }
    if dataset.meta:
        doc["meta"] = dataset.meta
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def _expect(cond: bool, context: str, message: str) -> None:
    if not cond:
        raise DatasetFormatError(f"{context}: {message}")


def _entry_to_graph(entry: dict, task: str, num_classes: int, feature_dim: int,
                    context: str) -> Graph:
    _expect(isinstance(entry, dict), context, "graph entry must be an object")
    for key in ("n", "edges", "features"):
        _expect(key in entry, context, f"missing field {key!r}")
    n = entry["n"]
    _expect(isinstance(n, int) and n >= 1, f"{context}.n", "must be a positive integer")
    adj = np.zeros((n, n))
    seen = set()
    for i, pair in enumerate(entry["edges"]):
        ctx = f"{context}.edges[{i}]"
        _expect(
            isinstance(pair, list) and len(pair) == 2, ctx, "must be a [u, v] pair"
        )
        u, v = pair
        _expect(isinstance(u, int) and isinstance(v, int), ctx, "endpoints must be integers")
        _expect(0 <= u < n and 0 <= v < n, ctx, f"endpoint out of range for n={n}")
        _expect(u != v, ctx, "self-loops are not allowed")
        _expect(u < v, ctx, f"edges must be listed once with u < v, got [{u}, {v}]")
        _expect((u, v) not in seen, ctx, f"duplicate edge [{u}, {v}]")
        seen.add((u, v))
        adj[u, v] = adj[v, u] = 1.0
    feats = entry["features"]
    _expect(
        isinstance(feats, list) and len(feats) == n,
        f"{context}.features",
        f"must list {n} rows",
    )
    for i, row in enumerate(feats):
        _expect(
            isinstance(row, list) and len(row) == feature_dim,
            f"{context}.features[{i}]",
            f"must have {feature_dim} entries",
        )
    label = None
    node_labels = None
    if task == GRAPH_TASK:
        _expect("label" in entry, context, "graph-task entries need a label")
        label = entry["label"]
        _expect(
            isinstance(label, int) and 0 <= label < num_classes,
            f"{context}.label",
            f"must be an integer in [0, {num_classes})",
        )
    else:
        _expect("node_labels" in entry, context, "node-task entries need node_labels")
        raw = entry["node_labels"]
        _expect(isinstance(raw, list) and len(raw) == n, f"{context}.node_labels",
                f"must list {n} labels")
        for i, y in enumerate(raw):
            _expect(
                isinstance(y, int) and 0 <= y < num_classes,
                f"{context}.node_labels[{i}]",
                f"label {y} must be an integer in [0, {num_classes})",
            )
        node_labels = tuple(raw)
    gt = None
    if "gt_edges" in entry:
        gt_set = set()
        for i, pair in enumerate(entry["gt_edges"]):
            ctx = f"{context}.gt_edges[{i}]"
            _expect(isinstance(pair, list) and len(pair) == 2, ctx, "must be a [u, v] pair")
            u, v = pair
            _expect(0 <= u < v < n, ctx, "must satisfy 0 <= u < v < n")
            _expect(adj[u, v] == 1.0, ctx, f"edge [{u}, {v}] is not in the graph")
            gt_set.add((u, v))
        gt = frozenset(gt_set)
    try:
        return Graph(
            adjacency=Matrix.from_numpy(adj),
            features=Matrix(feats),
            label=label,
            node_labels=node_labels,
            gt_edges=gt,
        )
    except (UsageError, ValueError) as exc:
        raise DatasetFormatError(f"{context}: {exc}") from exc


def load_dataset(path) -> Dataset:
    """Parse and validate a dataset file; inverse of :func:`save_dataset`."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    _expect(isinstance(doc, dict), str(path), "top level must be an object")
    for key in ("task", "num_classes", "feature_dim", "graphs", "train_idx", "test_idx"):
        _expect(key in doc, str(path), f"missing field {key!r}")
    task = doc["task"]
    _expect(task in (GRAPH_TASK, NODE_TASK), "task", f"must be 'graph' or 'node', got {task!r}")
    num_classes = doc["num_classes"]
    _expect(isinstance(num_classes, int) and num_classes >= 1, "num_classes", "must be >= 1")
    feature_dim = doc["feature_dim"]
    _expect(isinstance(feature_dim, int) and feature_dim >= 1, "feature_dim", "must be >= 1")
    graphs = tuple(
        _entry_to_graph(entry, task, num_classes, feature_dim, f"graphs[{i}]")
        for i, entry in enumerate(doc["graphs"])
    )
    for key in ("train_idx", "test_idx"):
        _expect(
            isinstance(doc[key], list) and all(isinstance(i, int) for i in doc[key]),
            key,
            "must be a list of integers",
        )
    try:
        return Dataset(
            task=task,
            num_classes=num_classes,
            feature_dim=feature_dim,
            graphs=graphs,
            train_idx=tuple(doc["train_idx"]),
            test_idx=tuple(doc["test_idx"]),
            meta=doc.get("meta", {}),
        )
    except UsageError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
