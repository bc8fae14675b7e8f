"""Explanation evaluation: necessity/sufficiency rates, motif metrics, reports.

An explanation is *sufficient* when the masked instance alone keeps the
model's original prediction, and *necessary* when removing it flips the
prediction. The aggregate rates PS and PN need no ground truth; their
harmonic mean summarizes both. When planted motifs exist, standard
precision/recall style metrics over kept edges are reported as well, and the
two metric families can be rank-correlated across methods.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import UndefinedCorrelationError, UsageError
from .explainer import Explanation, MASK_BOTH, MASK_EDGES, MASK_FEATURES
from .gnn import GcnModel, forward, predict
from .graphs import Edge, Graph, SubGraphInstance, canonical_edge
from .tensor import Matrix


def _local_kept_edges(instance, explanation: Explanation) -> set[Edge]:
    if isinstance(instance, SubGraphInstance):
        node_map = instance.node_map
        return {
            canonical_edge(node_map[u], node_map[v]) for u, v in explanation.kept_edges
        }
    return {canonical_edge(u, v) for u, v in explanation.kept_edges}


def _masked_pair(instance, explanation: Explanation, complement: bool) -> tuple[Matrix, Matrix]:
    """Binary-mask view of the instance (or its complement).

    A disabled mask side leaves its part of the instance untouched in both
    directions: an explanation cannot remove what it does not include.
    """
    a = instance.adjacency.to_numpy()
    x = instance.features.to_numpy()
    edges_on = explanation.mask_mode in (MASK_EDGES, MASK_BOTH)
    feats_on = explanation.mask_mode in (MASK_FEATURES, MASK_BOTH)
    if edges_on:
        kept = _local_kept_edges(instance, explanation)
        mask = np.zeros_like(a)
        for u, v in kept:
            mask[u, v] = mask[v, u] = 1.0
        new_a = a - a * mask if complement else a * mask
    else:
        new_a = a
    if feats_on:
        fmask = np.zeros_like(x)
        for kept_feature in explanation.kept_features:
            if isinstance(kept_feature, (tuple, list)):
                i, j = kept_feature
                fmask[i, j] = 1.0
            else:
                fmask[:, int(kept_feature)] = 1.0
        new_x = x - x * fmask if complement else x * fmask
    else:
        new_x = x
    return Matrix.from_numpy(new_a), Matrix.from_numpy(new_x)


def _argmax_label(model: GcnModel, a: Matrix, x: Matrix) -> int:
    probs = forward(model, a, x)
    return int(np.argmax(probs.to_numpy()[0]))


def probability_of_sufficiency(
    model: GcnModel,
    instances: Sequence[Graph | SubGraphInstance],
    explanations: Sequence[Explanation],
) -> tuple[float, list[int]]:
    """Fraction of explanations that alone preserve the model's prediction."""
    bits = []
    for instance, explanation in zip(instances, explanations):
        y_hat = predict(model, instance).label
        masked_a, masked_x = _masked_pair(instance, explanation, complement=False)
        bits.append(1 if _argmax_label(model, masked_a, masked_x) == y_hat else 0)
    return (sum(bits) / len(bits) if bits else 0.0), bits


def probability_of_necessity(
    model: GcnModel,
    instances: Sequence[Graph | SubGraphInstance],
    explanations: Sequence[Explanation],
) -> tuple[float, list[int]]:
    """Fraction of explanations whose removal flips the model's prediction."""
    bits = []
    for instance, explanation in zip(instances, explanations):
        y_hat = predict(model, instance).label
        comp_a, comp_x = _masked_pair(instance, explanation, complement=True)
        bits.append(1 if _argmax_label(model, comp_a, comp_x) != y_hat else 0)
    return (sum(bits) / len(bits) if bits else 0.0), bits


def f_ns(pn: float, ps: float) -> float:
    """Harmonic mean of the necessity and sufficiency rates (0 when both are 0)."""
    if not (0.0 <= pn <= 1.0 and 0.0 <= ps <= 1.0):
        raise UsageError(f"pn and ps must lie in [0, 1], got {pn}, {ps}")
    if pn + ps == 0.0:
        return 0.0
    return 2.0 * pn * ps / (pn + ps)


def ground_truth_metrics(
    explanations: Sequence[Explanation],
    ground_truth_edge_sets: Sequence[frozenset[Edge] | set[Edge]],
    candidate_universes: Sequence[Sequence[Edge]],
) -> tuple[list[dict], dict]:
    """Per-instance and mean accuracy/precision/recall/F1 over kept edges.

    Edges are undirected pairs in original node ids; the universe is the
    instance's existing edge set. F1 (and precision on an empty kept set) is
    defined as 0.
    """
    per_instance = []
    for explanation, gt, universe in zip(explanations, ground_truth_edge_sets, candidate_universes):
        if not gt:
            raise UsageError(
                f"instance {explanation.instance_id} has no ground-truth edges"
            )
        gt_set = {canonical_edge(u, v) for u, v in gt}
        kept = {canonical_edge(u, v) for u, v in explanation.kept_edges}
        universe_set = {canonical_edge(u, v) for u, v in universe}
        if not gt_set <= universe_set:
            raise UsageError(
                f"instance {explanation.instance_id}: ground truth leaves the edge universe"
            )
        true_kept = len(kept & gt_set)
        precision = true_kept / len(kept) if kept else 0.0
        recall = true_kept / len(gt_set)
        f1 = (
            2.0 * precision * recall / (precision + recall)
            if precision + recall > 0
            else 0.0
        )
        true_dropped = len(universe_set - kept - gt_set)
        accuracy = (true_kept + true_dropped) / len(universe_set)
        per_instance.append({"acc": accuracy, "pr": precision, "re": recall, "f1": f1})
    means = {
        key: (sum(rec[key] for rec in per_instance) / len(per_instance)) if per_instance else 0.0
        for key in ("acc", "pr", "re", "f1")
    }
    return per_instance, means


def _check_rank_inputs(xs: Sequence[float], ys: Sequence[float]) -> None:
    if len(xs) != len(ys):
        raise UsageError(f"lists differ in length: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise UsageError("rank correlation needs at least two observations")
    if len(set(xs)) < 2 or len(set(ys)) < 2:
        raise UndefinedCorrelationError("correlation undefined for a constant list")


def kendall_tau(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Kendall's tau-b (tie-corrected)."""
    _check_rank_inputs(xs, ys)
    tau = stats.kendalltau(xs, ys, variant="b").statistic
    if not np.isfinite(tau):
        raise UndefinedCorrelationError("tau is undefined for these inputs")
    return float(tau)


def spearman_rho(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman's rho: Pearson correlation of average ranks."""
    _check_rank_inputs(xs, ys)
    rho = stats.spearmanr(xs, ys).statistic
    if not np.isfinite(rho):
        raise UndefinedCorrelationError("rho is undefined for these inputs")
    return float(rho)


@dataclass
class EvalReport:
    """Per-instance records plus aggregate metrics for one explanation run."""

    records: list[dict]
    aggregates: dict

    def to_json_dict(self) -> dict:
        return {"aggregates": self.aggregates, "instances": self.records}

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        columns = ["instance", "pn", "ps", "size", "acc", "pr", "re", "f1"]
        writer.writerow(columns)
        for rec in self.records:
            writer.writerow([rec.get(c, "") if rec.get(c) is not None else "" for c in columns])
        agg = self.aggregates
        writer.writerow(
            [
                "aggregate",
                agg.get("pn", ""),
                agg.get("ps", ""),
                agg.get("mean_size", ""),
                agg.get("acc", ""),
                agg.get("pr", ""),
                agg.get("re", ""),
                agg.get("f1", ""),
            ]
        )
        return buf.getvalue()

    def save(self, json_path, csv_path=None) -> None:
        Path(json_path).write_text(json.dumps(self.to_json_dict(), indent=1) + "\n")
        if csv_path is not None:
            Path(csv_path).write_text(self.to_csv_text())


def evaluate_explanations(
    model: GcnModel,
    instances: Sequence[Graph | SubGraphInstance],
    explanations: Sequence[Explanation],
    ground_truth_edge_sets: Sequence[frozenset[Edge]] | None = None,
) -> EvalReport:
    """PN/PS (and motif metrics when ground truth is given) for one run."""
    if len(instances) != len(explanations):
        raise UsageError("instances and explanations must align")
    if not explanations:
        raise UsageError("nothing to evaluate")
    pn, pn_bits = probability_of_necessity(model, instances, explanations)
    ps, ps_bits = probability_of_sufficiency(model, instances, explanations)
    records = []
    for instance, explanation, pn_k, ps_k in zip(instances, explanations, pn_bits, ps_bits):
        records.append(
            {
                "instance": explanation.instance_id,
                "pn": pn_k,
                "ps": ps_k,
                "size": explanation.size,
            }
        )
    aggregates = {
        "pn": pn,
        "ps": ps,
        "fns": f_ns(pn, ps),
        "mean_size": sum(e.size for e in explanations) / len(explanations),
        "count": len(explanations),
    }
    if ground_truth_edge_sets is not None:
        universes = [
            [
                canonical_edge(u, v)
                for u, v in (
                    instance.to_original(instance.edges())
                    if isinstance(instance, SubGraphInstance)
                    else instance.edges()
                )
            ]
            for instance in instances
        ]
        per_instance, means = ground_truth_metrics(
            explanations, ground_truth_edge_sets, universes
        )
        for rec, gt_rec in zip(records, per_instance):
            rec.update(gt_rec)
        aggregates.update(means)
    return EvalReport(records=records, aggregates=aggregates)
