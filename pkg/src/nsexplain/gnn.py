"""The base classifier: an L-layer GCN trained by full-batch gradient descent.

Layers compute H^l = ReLU(norm(A) H^(l-1) W^l), with no ReLU on the last GCN
layer; a linear head then maps hidden states to class scores (per node for
node classification, after mean pooling for graph classification) followed by
a row softmax. Trained models are frozen and queried read-only by the
explainer; forward passes are differentiable w.r.t. adjacency and features
whenever a tape is open.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .errors import DatasetFormatError, TrainingDivergedError, UsageError
from .graphs import (
    Dataset,
    GRAPH_TASK,
    Graph,
    NODE_TASK,
    SubGraphInstance,
    normalize_adjacency,
)
from .optim import Adam
from .tensor import Matrix


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float = 0.001
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise UsageError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise UsageError("learning_rate must be > 0")


@dataclass(frozen=True)
class GcnModel:
    """Frozen GCN weights plus the linear classification head."""

    layers: tuple[Matrix, ...]
    head: Matrix
    task: str
    feature_dim: int
    hidden_dim: int
    num_classes: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.task not in (GRAPH_TASK, NODE_TASK):
            raise UsageError(f"unknown task {self.task!r}")
        if not self.layers:
            raise UsageError("model needs at least one layer")
        expect_in = self.feature_dim
        for i, w in enumerate(self.layers):
            if w.rows != expect_in or w.cols != self.hidden_dim:
                raise UsageError(
                    f"layer {i} has shape {w.rows}x{w.cols}, expected {expect_in}x{self.hidden_dim}"
                )
            expect_in = self.hidden_dim
        if self.head.rows != self.hidden_dim or self.head.cols != self.num_classes:
            raise UsageError(
                f"head has shape {self.head.rows}x{self.head.cols}, "
                f"expected {self.hidden_dim}x{self.num_classes}"
            )

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class Prediction:
    label: int
    runner_up: int | None
    probabilities: Matrix  # 1 x num_classes row for the predicted instance


def _logits(layers, head, task: str, norm_adj: Matrix, features: Matrix) -> Matrix:
    h = features
    last = len(layers) - 1
    for i, w in enumerate(layers):
        h = T.matmul(T.matmul(norm_adj, h), w)
        if i != last:
            h = T.relu(h)
    if task == GRAPH_TASK:
        h = T.mean_rows(h)
    return T.matmul(h, head)


def forward(model: GcnModel, adjacency: Matrix, features: Matrix) -> Matrix:
    """Class probabilities: one row per node (node task) or a single row (graph task).

    ``adjacency`` may be fractional (mask-weighted); it is normalized with
    self-loops inside. Recorded on the active tape if one is open.
    """
    if features.cols != model.feature_dim:
        raise UsageError(
            f"features have {features.cols} columns, model expects {model.feature_dim}"
        )
    if adjacency.rows != features.rows:
        raise UsageError(
            f"adjacency is {adjacency.rows}x{adjacency.cols} but features have "
            f"{features.rows} rows"
        )
    norm = normalize_adjacency(adjacency)
    return T.row_softmax(_logits(model.layers, model.head, model.task, norm, features))


def top_two(prob_row: np.ndarray) -> tuple[int, int | None]:
    """Argmax label and runner-up, ties broken by lowest class id."""
    label = int(np.argmax(prob_row))
    if prob_row.size < 2:
        return label, None
    rest = prob_row.copy()
    rest[label] = -np.inf
    return label, int(np.argmax(rest))


def predict(model: GcnModel, instance: Graph | SubGraphInstance) -> Prediction:
    """Predicted label, runner-up label, and the probability row.

    Graph-task instances are whole graphs; node-task instances are
    computational sub-graphs whose target is local node 0.
    """
    if model.task == NODE_TASK and not isinstance(instance, SubGraphInstance):
        raise UsageError("node-task predictions take a computational sub-graph instance")
    probs = forward(model, instance.adjacency, instance.features)
    row_idx = 0  # graph task: single pooled row; node task: target is local 0
    row = probs.to_numpy()[row_idx]
    label, runner = top_two(row)
    return Prediction(label=label, runner_up=runner, probabilities=Matrix.from_numpy(row[None, :]))


def _init_weights(rng: np.random.Generator, shapes: list[tuple[int, int]]) -> list[np.ndarray]:
    out = []
    for fan_in, fan_out in shapes:
        s = math.sqrt(6.0 / (fan_in + fan_out))
        out.append(rng.uniform(-s, s, size=(fan_in, fan_out)))
    return out


def _node_accuracy(layers, head, norm: Matrix, features: Matrix, labels, idx) -> float:
    logits = _logits(layers, head, NODE_TASK, norm, features).to_numpy()
    pred = logits.argmax(axis=1)
    hits = sum(1 for i in idx if pred[i] == labels[i])
    return hits / len(idx) if idx else 0.0


def _graph_accuracy(layers, head, per_graph, idx) -> float:
    hits = 0
    for i in idx:
        norm, feats, label = per_graph[i]
        logits = _logits(layers, head, GRAPH_TASK, norm, feats).to_numpy()
        if int(logits[0].argmax()) == label:
            hits += 1
    return hits / len(idx) if idx else 0.0


def train(
    dataset: Dataset,
    config: TrainConfig,
    num_layers: int = 3,
    hidden_dim: int = 16,
) -> GcnModel:
    """Full-batch Adam on cross-entropy; deterministic for a fixed seed.

    Node tasks train on the whole graph with the training-node label mask.
    The returned model's ``meta`` records train/test accuracy and the
    per-epoch loss history.
    """
    if num_layers < 1:
        raise UsageError("num_layers must be >= 1")
    rng = np.random.default_rng(config.seed)
    shapes = [(dataset.feature_dim if i == 0 else hidden_dim, hidden_dim) for i in range(num_layers)]
    shapes.append((hidden_dim, dataset.num_classes))
    arrays = _init_weights(rng, shapes)
    adam = Adam(shapes, config.learning_rate)

    if dataset.task == NODE_TASK:
        g = dataset.graphs[0]
        norm = normalize_adjacency(g.adjacency)
        features = g.features
        labels = list(g.node_labels)  # type: ignore[arg-type]
        train_rows = list(dataset.train_idx)
        train_labels = [labels[i] for i in train_rows]
    else:
        per_graph = [
            (normalize_adjacency(g.adjacency), g.features, g.label) for g in dataset.graphs
        ]

    loss_history: list[float] = []
    for epoch in range(config.epochs):
        mats = [Matrix.from_numpy(a) for a in arrays]
        layer_mats, head_mat = mats[:-1], mats[-1]
        with T.Tape() as tape:
            for m in mats:
                tape.parameter(m)
            if dataset.task == NODE_TASK:
                logits = _logits(layer_mats, head_mat, NODE_TASK, norm, features)
                loss = T.cross_entropy(logits, train_labels, rows=train_rows)
            else:
                total = None
                for i in dataset.train_idx:
                    g_norm, g_feats, g_label = per_graph[i]
                    logits = _logits(layer_mats, head_mat, GRAPH_TASK, g_norm, g_feats)
                    ce = T.cross_entropy(logits, [g_label])
                    total = ce if total is None else T.add(total, ce)
                loss = T.scale(total, 1.0 / len(dataset.train_idx))
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingDivergedError(epoch)
        loss_history.append(value)
        grads = tape.gradients(loss)
        arrays = adam.step(arrays, [grads[m].to_numpy() for m in mats])
        if not all(np.isfinite(a).all() for a in arrays):
            raise TrainingDivergedError(epoch)

    final = [Matrix.from_numpy(a) for a in arrays]
    layers, head = tuple(final[:-1]), final[-1]
    if dataset.task == NODE_TASK:
        train_acc = _node_accuracy(layers, head, norm, features, labels, dataset.train_idx)
        test_acc = _node_accuracy(layers, head, norm, features, labels, dataset.test_idx)
    else:
        train_acc = _graph_accuracy(layers, head, per_graph, dataset.train_idx)
        test_acc = _graph_accuracy(layers, head, per_graph, dataset.test_idx)
    meta = {
        "epochs": config.epochs,
        "learning_rate": config.learning_rate,
        "seed": config.seed,
        "train_accuracy": train_acc,
        "test_accuracy": test_acc,
        "loss_history": loss_history,
    }
    return GcnModel(
        layers=layers,
        head=head,
        task=dataset.task,
        feature_dim=dataset.feature_dim,
        hidden_dim=hidden_dim,
        num_classes=dataset.num_classes,
        meta=meta,
    )


def save_model(model: GcnModel, path) -> None:
    """Checkpoint as JSON: layer weights first, head last."""
    doc = {
        "arch": {
            "num_layers": model.num_layers,
            "hidden_dim": model.hidden_dim,
            "feature_dim": model.feature_dim,
            "num_classes": model.num_classes,
        },
        "weights": [w.tolist() for w in model.layers] + [model.head.tolist()],
        "task": model.task,
        "train_meta": model.meta,
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> GcnModel:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    try:
        arch = doc["arch"]
        weights = [Matrix(w) for w in doc["weights"]]
        return GcnModel(
            layers=tuple(weights[:-1]),
            head=weights[-1],
            task=doc["task"],
            feature_dim=arch["feature_dim"],
            hidden_dim=arch["hidden_dim"],
            num_classes=arch["num_classes"],
            meta=doc.get("train_meta", {}),
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: invalid model checkpoint: {exc}") from exc
