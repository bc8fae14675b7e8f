"""Per-instance explanation by joint counterfactual and factual mask learning.

For a frozen classifier and one instance, relaxed edge and feature masks are
optimized to minimize

    l1(edge mask) + l1(feature mask) + lambda * (alpha * L_f + (1 - alpha) * L_c)

where L_f is a hinge that wants the masked input to keep the original
prediction by a margin (sufficiency) and L_c is a hinge that wants the
complement input - original minus explanation - to lose it by a margin
(necessity). Masks live in (0, 1) via a sigmoid over latent parameters and
binarize at 0.5. alpha = 1 gives a factual-only explainer, alpha = 0 a
counterfactual-only one; both serve as ablation baselines.

A disabled mask side never participates: with edge masks only, the factual
pass keeps all features and the complement pass removes none of them (and
symmetrically for feature-only masks), since an explanation cannot remove
what it does not include.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .errors import OptimizationError, ShapeError, UsageError
from .gnn import GcnModel, Prediction, forward, predict, top_two
from .graphs import Edge, Graph, NODE_TASK, SubGraphInstance
from .optim import Adam
from .tensor import Matrix

MASK_EDGES = "edges"
MASK_FEATURES = "features"
MASK_BOTH = "both"

BINARIZE_THRESHOLD = "threshold"
BINARIZE_TOPK = "topk"

MASK_THRESHOLD = 0.5


@dataclass(frozen=True)
class ExplainConfig:
    """Knobs for one explanation run; defaults follow the standard protocol."""

    lambda_: float = 500.0
    alpha: float = 0.6
    gamma: float = 0.5
    epochs: int = 500
    learning_rate: float = 0.01
    mask_mode: str = MASK_EDGES
    binarize_mode: str = BINARIZE_THRESHOLD
    top_k: int | None = None
    feature_granularity: str = "column"  # "column" or "node"
    runner_up_mode: str = "recompute"  # "recompute" or "fixed"
    seed: int = 0

    def __post_init__(self):
        if self.lambda_ < 0:
            raise UsageError("lambda must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise UsageError("alpha must be in [0, 1]")
        if self.gamma < 0:
            raise UsageError("gamma must be >= 0")
        if self.epochs < 1:
            raise UsageError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise UsageError("learning_rate must be > 0")
        if self.mask_mode not in (MASK_EDGES, MASK_FEATURES, MASK_BOTH):
            raise UsageError(f"unknown mask_mode {self.mask_mode!r}")
        if self.binarize_mode not in (BINARIZE_THRESHOLD, BINARIZE_TOPK):
            raise UsageError(f"unknown binarize mode {self.binarize_mode!r}")
        if self.binarize_mode == BINARIZE_TOPK and self.top_k is None:
            raise UsageError("top-k binarization needs top_k")
        if self.feature_granularity not in ("column", "node"):
            raise UsageError(f"unknown feature_granularity {self.feature_granularity!r}")
        if self.runner_up_mode not in ("recompute", "fixed"):
            raise UsageError(f"unknown runner_up_mode {self.runner_up_mode!r}")

    @property
    def edges_active(self) -> bool:
        return self.mask_mode in (MASK_EDGES, MASK_BOTH)

    @property
    def features_active(self) -> bool:
        return self.mask_mode in (MASK_FEATURES, MASK_BOTH)


@dataclass(frozen=True)
class MaskPair:
    """Relaxed masks over one instance's edges and feature columns.

    ``edge_values[0, e]`` is the activated (sigmoid) mask of ``edges[e]``.
    A ``None`` side means that mask mode is disabled for the run.
    """

    n: int
    d: int
    edges: tuple[Edge, ...]
    edge_values: Matrix | None
    feature_values: Matrix | None  # 1 x d (column) or n x d (node granularity)

    def edge_matrix(self) -> Matrix:
        """Activated edge mask spread symmetrically onto the adjacency support."""
        if self.edge_values is None:
            raise UsageError("edge mask is disabled for this run")
        return T.scatter_edges(self.edge_values, self.edges, self.n)

    def feature_matrix(self) -> Matrix:
        """Activated feature mask as a full n x d matrix."""
        if self.feature_values is None:
            raise UsageError("feature mask is disabled for this run")
        if self.feature_values.rows == 1:
            return T.matmul(Matrix.ones(self.n, 1), self.feature_values)
        return self.feature_values


@dataclass(frozen=True)
class Explanation:
    """Binarized masks for one instance plus optimization provenance.

    Edge endpoints are original node ids (mapped back through the
    computational sub-graph for node instances). ``size`` counts each kept
    undirected edge once, plus kept features when feature masks are active.
    """

    instance_id: int
    kept_edges: tuple[Edge, ...]
    kept_features: tuple
    masks: MaskPair
    size: int
    losses: dict
    mask_mode: str
    predicted_label: int
    runner_up: int
    edge_values_by_edge: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        mask_values: dict = {}
        if self.masks.edge_values is not None:
            mask_values["edges"] = [
                [u, v, val] for (u, v), val in sorted(self.edge_values_by_edge.items())
            ]
        if self.masks.feature_values is not None:
            mask_values["features"] = self.masks.feature_values.tolist()
        return {
            "instance": self.instance_id,
            "kept_edges": [[u, v] for u, v in self.kept_edges],
            "kept_features": [list(f) if isinstance(f, tuple) else f
                              for f in self.kept_features],
            "mask_values": mask_values,
            "loss": {"l1": self.losses["l1"], "lf": self.losses["lf"],
                     "lc": self.losses["lc"]},
            "size": self.size,
        }


# -- mask application ---------------------------------------------------------


def _check_mask_shapes(a: Matrix, x: Matrix, m_star: Matrix, f_star: Matrix) -> None:
    if m_star.shape != a.shape:
        raise ShapeError(
            f"edge mask is {m_star.rows}x{m_star.cols}, adjacency is {a.rows}x{a.cols}"
        )
    if f_star.shape != x.shape:
        raise ShapeError(
            f"feature mask is {f_star.rows}x{f_star.cols}, features are {x.rows}x{x.cols}"
        )
    off_support = m_star.to_numpy()[a.to_numpy() == 0.0]
    if off_support.size and np.any(off_support != 0.0):
        raise UsageError("edge mask must be zero wherever the adjacency is zero")


def apply_masks(a: Matrix, x: Matrix, m_star: Matrix, f_star: Matrix) -> tuple[Matrix, Matrix]:
    """(A * M, X * F): the explanation's view of the instance."""
    _check_mask_shapes(a, x, m_star, f_star)
    return T.mul(a, m_star), T.mul(x, f_star)


def apply_complement(a: Matrix, x: Matrix, m_star: Matrix, f_star: Matrix) -> tuple[Matrix, Matrix]:
    """(A - A * M, X - X * F): the instance with the explanation removed."""
    _check_mask_shapes(a, x, m_star, f_star)
    return T.sub(a, T.mul(a, m_star)), T.sub(x, T.mul(x, f_star))


def _target_row(model: GcnModel, instance) -> int:
    return 0  # graph task: pooled single row; node task: target is local node 0


def _pick_prob(probs: Matrix, row: int, cls: int) -> Matrix:
    indicator = np.zeros(probs.shape)
    indicator[row, cls] = 1.0
    return T.sum_all(T.mul(probs, Matrix.from_numpy(indicator)))


def _runner_up(probs: Matrix, row: int, label: int) -> int:
    values = probs.to_numpy()[row].copy()
    values[label] = -np.inf
    return int(np.argmax(values))


def strength_factual(
    model: GcnModel, instance, m_star: Matrix, f_star: Matrix,
    predicted: int | None = None,
) -> Matrix:
    """P(predicted label | masked instance) as a differentiable 1x1 value."""
    if predicted is None:
        predicted = predict(model, instance).label
    masked_a, masked_x = apply_masks(instance.adjacency, instance.features, m_star, f_star)
    probs = forward(model, masked_a, masked_x)
    return _pick_prob(probs, _target_row(model, instance), predicted)


def strength_counterfactual(
    model: GcnModel, instance, m_star: Matrix, f_star: Matrix,
    predicted: int | None = None,
) -> Matrix:
    """-P(predicted label | complement instance), in [-1, 0]."""
    if predicted is None:
        predicted = predict(model, instance).label
    comp_a, comp_x = apply_complement(instance.adjacency, instance.features, m_star, f_star)
    probs = forward(model, comp_a, comp_x)
    return T.scale(_pick_prob(probs, _target_row(model, instance), predicted), -1.0)


def _hinge(gamma: float, keep: Matrix, drop: Matrix) -> Matrix:
    """ReLU(gamma + drop - keep); zero exactly when keep >= drop + gamma."""
    margin = T.sub(drop, keep)
    return T.relu(T.add(margin, Matrix.full(1, 1, gamma)))


def _contrastive_loss(
    model: GcnModel,
    instance,
    adjacency: Matrix,
    features: Matrix,
    gamma: float,
    predicted: int,
    fixed_runner_up: int | None,
    flip: bool,
) -> tuple[Matrix, Matrix]:
    """Hinge loss and P(predicted) on one (masked or complement) input.

    ``flip=False`` wants the prediction kept (factual side); ``flip=True``
    wants it lost (counterfactual side). The runner-up class is recomputed
    on this input unless ``fixed_runner_up`` is given.
    """
    probs = forward(model, adjacency, features)
    row = _target_row(model, instance)
    runner = fixed_runner_up if fixed_runner_up is not None else _runner_up(probs, row, predicted)
    p_label = _pick_prob(probs, row, predicted)
    p_runner = _pick_prob(probs, row, runner)
    if flip:
        # counterfactual: ReLU(gamma - S_c - P(runner | complement)) with
        # S_c = -P(label | complement), i.e. the label should fall behind
        loss = _hinge(gamma, keep=p_runner, drop=p_label)
    else:
        loss = _hinge(gamma, keep=p_label, drop=p_runner)
    return loss, p_label


def loss_factual(
    model: GcnModel, instance, m_star: Matrix, f_star: Matrix, gamma: float,
    predicted: int | None = None, fixed_runner_up: int | None = None,
) -> Matrix:
    """Margin violation of the factual condition on the masked instance."""
    if predicted is None:
        predicted = predict(model, instance).label
    masked_a, masked_x = apply_masks(instance.adjacency, instance.features, m_star, f_star)
    loss, _ = _contrastive_loss(
        model, instance, masked_a, masked_x, gamma, predicted, fixed_runner_up, flip=False
    )
    return loss


def loss_counterfactual(
    model: GcnModel, instance, m_star: Matrix, f_star: Matrix, gamma: float,
    predicted: int | None = None, fixed_runner_up: int | None = None,
) -> Matrix:
    """Margin violation of the counterfactual condition on the complement."""
    if predicted is None:
        predicted = predict(model, instance).label
    comp_a, comp_x = apply_complement(instance.adjacency, instance.features, m_star, f_star)
    loss, _ = _contrastive_loss(
        model, instance, comp_a, comp_x, gamma, predicted, fixed_runner_up, flip=True
    )
    return loss


def binarize(masks: MaskPair, mode: str = BINARIZE_THRESHOLD, k: int | None = None
             ) -> tuple[Matrix, Matrix]:
    """Binary (M, F) matrices from relaxed masks.

    Threshold mode keeps strictly greater than 0.5. Top-k keeps the k
    largest-valued edges (ties by lowest edge index); features still
    binarize by threshold unless the edge mask is disabled, in which case k
    applies to the features. Disabled sides come back as all-ones.
    """
    n, d = masks.n, masks.d
    if masks.edge_values is not None:
        values = masks.edge_values.to_numpy()[0]
        if mode == BINARIZE_TOPK and masks.edges:
            if k is None or not 0 <= k <= len(masks.edges):
                raise UsageError(
                    f"top-k needs 0 <= k <= {len(masks.edges)} existing edges, got {k}"
                )
            order = sorted(range(len(values)), key=lambda e: (-values[e], e))
            keep_idx = set(order[:k])
            kept = [e for e in range(len(values)) if e in keep_idx]
        else:
            kept = [e for e in range(len(values)) if values[e] > MASK_THRESHOLD]
        m_bin = np.zeros((n, n))
        for e in kept:
            u, v = masks.edges[e]
            m_bin[u, v] = m_bin[v, u] = 1.0
        m = Matrix.from_numpy(m_bin)
    else:
        m = Matrix.ones(n, n)
    if masks.feature_values is not None:
        f_vals = masks.feature_values.to_numpy()
        if mode == BINARIZE_TOPK and masks.edge_values is None:
            flat = f_vals.ravel()
            if k is None or not 0 <= k <= flat.size:
                raise UsageError(f"top-k needs 0 <= k <= {flat.size} features, got {k}")
            order = sorted(range(flat.size), key=lambda i: (-flat[i], i))
            keep = np.zeros(flat.size)
            keep[order[:k]] = 1.0
            f_bin = keep.reshape(f_vals.shape)
        else:
            f_bin = (f_vals > MASK_THRESHOLD).astype(float)
        if f_bin.shape[0] == 1:
            f_bin = np.repeat(f_bin, n, axis=0)
        f = Matrix.from_numpy(f_bin)
    else:
        f = Matrix.ones(n, d)
    return m, f


def _instance_id(instance, explicit: int | None) -> int:
    if explicit is not None:
        return explicit
    if isinstance(instance, SubGraphInstance):
        return instance.target_node
    return 0


def explain(
    model: GcnModel,
    instance: Graph | SubGraphInstance,
    config: ExplainConfig,
    instance_id: int | None = None,
) -> Explanation:
    """Optimize relaxed masks for one instance and return the binarized result.

    Deterministic: latents start at 0 (activated value 0.5, unbiased w.r.t.
    the 0.5 keep/drop threshold) and the update sequence has no random
    component. Loss sides with zero objective weight (alpha 0 or 1, or
    lambda 0) are skipped entirely during optimization and only evaluated
    once at the end for reporting.
    """
    if model.task == NODE_TASK and not isinstance(instance, SubGraphInstance):
        raise UsageError("node-task explanations take a computational sub-graph instance")
    prediction: Prediction = predict(model, instance)
    if prediction.runner_up is None:
        raise UsageError("cannot explain a single-class model")
    predicted = prediction.label
    fixed_runner = prediction.runner_up if config.runner_up_mode == "fixed" else None

    a = instance.adjacency
    x = instance.features
    n, d = a.rows, x.cols
    edges = tuple(instance.edges())

    use_edges = config.edges_active and len(edges) > 0
    use_features = config.features_active

    shapes: list[tuple[int, int]] = []
    if use_edges:
        shapes.append((1, len(edges)))
    if use_features:
        shapes.append((n, d) if config.feature_granularity == "node" else (1, d))
    arrays = [np.zeros(s) for s in shapes]

    weight_f = config.lambda_ * config.alpha
    weight_c = config.lambda_ * (1.0 - config.alpha)

    ones_feat = Matrix.ones(n, d)
    zeros_feat = Matrix.zeros(n, d)
    zeros_adj = Matrix.zeros(n, n)

    def build_masks(mats: Sequence[Matrix]) -> tuple[Matrix | None, Matrix | None, list[Matrix]]:
        """Activated mask matrices plus the per-side l1 summands."""
        idx = 0
        m_full = None
        f_full = None
        l1_parts: list[Matrix] = []
        if use_edges:
            m_vals = T.sigmoid(mats[idx])
            idx += 1
            l1_parts.append(T.sum_all(m_vals))  # each undirected edge once
            m_full = T.scatter_edges(m_vals, edges, n)
        if use_features:
            f_vals = T.sigmoid(mats[idx])
            l1_parts.append(T.sum_all(f_vals))
            f_full = T.matmul(Matrix.ones(n, 1), f_vals) if f_vals.rows == 1 else f_vals
        return m_full, f_full, l1_parts

    def objective(mats: Sequence[Matrix]) -> Matrix:
        m_full, f_full, l1_parts = build_masks(mats)
        total = l1_parts[0]
        for part in l1_parts[1:]:
            total = T.add(total, part)
        if weight_f > 0:
            masked_a, masked_x = apply_masks(
                a, x, m_full if m_full is not None else a, f_full if f_full is not None else ones_feat
            )
            l_f, _ = _contrastive_loss(
                model, instance, masked_a, masked_x, config.gamma, predicted,
                fixed_runner, flip=False,
            )
            total = T.add(total, T.scale(l_f, weight_f))
        if weight_c > 0:
            comp_a, comp_x = apply_complement(
                a, x, m_full if m_full is not None else zeros_adj,
                f_full if f_full is not None else zeros_feat,
            )
            l_c, _ = _contrastive_loss(
                model, instance, comp_a, comp_x, config.gamma, predicted,
                fixed_runner, flip=True,
            )
            total = T.add(total, T.scale(l_c, weight_c))
        return total

    if arrays:
        adam = Adam(shapes, config.learning_rate)
        for step in range(config.epochs):
            mats = [Matrix.from_numpy(p) for p in arrays]
            with T.Tape() as tape:
                for m in mats:
                    tape.parameter(m)
                loss = objective(mats)
            if not math.isfinite(loss.item()):
                raise OptimizationError(step)
            grads = tape.gradients(loss)
            arrays = adam.step(arrays, [grads[m].to_numpy() for m in mats])
            if not all(np.isfinite(p).all() for p in arrays):
                raise OptimizationError(step)

    # final relaxed masks and reported loss components (all computed, even
    # the side that carried zero weight during optimization)
    final_mats = [Matrix.from_numpy(p) for p in arrays]
    m_full, f_full, l1_parts = build_masks(final_mats)
    l1_value = sum(p.item() for p in l1_parts)

    idx = 0
    edge_values = None
    feature_values = None
    if use_edges:
        edge_values = T.sigmoid(final_mats[idx])
        idx += 1
    if use_features:
        feature_values = T.sigmoid(final_mats[idx])
    masks = MaskPair(n=n, d=d, edges=edges, edge_values=edge_values,
                     feature_values=feature_values)

    lf_value = loss_factual(
        model, instance,
        m_full if m_full is not None else a,
        f_full if f_full is not None else ones_feat,
        config.gamma, predicted, fixed_runner,
    ).item()
    lc_value = loss_counterfactual(
        model, instance,
        m_full if m_full is not None else zeros_adj,
        f_full if f_full is not None else zeros_feat,
        config.gamma, predicted, fixed_runner,
    ).item()

    m_bin, f_bin = binarize(masks, config.binarize_mode, config.top_k)
    kept_local = []
    if use_edges:
        bin_arr = m_bin.to_numpy()
        kept_local = [e for e in edges if bin_arr[e[0], e[1]] == 1.0]
    elif config.edges_active:
        kept_local = []  # edge mode active but the instance has no edges
    else:
        kept_local = list(edges)
    kept_features: tuple
    if use_features:
        f_arr = f_bin.to_numpy()
        if config.feature_granularity == "column":
            kept_features = tuple(int(j) for j in range(d) if f_arr[0, j] == 1.0)
        else:
            kept_features = tuple(
                (int(i), int(j)) for i in range(n) for j in range(d) if f_arr[i, j] == 1.0
            )
    else:
        kept_features = tuple(range(d))

    size = 0
    if config.edges_active:
        size += len(kept_local)
    if config.features_active:
        size += len(kept_features)

    if isinstance(instance, SubGraphInstance):
        kept_edges = tuple(sorted(instance.to_original(kept_local)))
        edge_map = dict(zip(edges, instance.to_original(edges))) if edges else {}
    else:
        kept_edges = tuple(sorted(kept_local))
        edge_map = {e: e for e in edges}

    values_by_edge = {}
    if edge_values is not None:
        vals = edge_values.to_numpy()[0]
        values_by_edge = {edge_map[e]: float(vals[i]) for i, e in enumerate(edges)}

    return Explanation(
        instance_id=_instance_id(instance, instance_id),
        kept_edges=kept_edges,
        kept_features=kept_features,
        masks=masks,
        size=size,
        losses={"l1": l1_value, "lf": lf_value, "lc": lc_value},
        mask_mode=config.mask_mode,
        predicted_label=predicted,
        runner_up=prediction.runner_up,
        edge_values_by_edge=values_by_edge,
    )
