"""Evaluation metrics: accuracy, exact AUROC, precision@top-N, breakdowns."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, UndefinedMetricError


def accuracy(scores, labels, threshold=0.5):
    """Fraction of instances where (score >= threshold) matches the label."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape != labels.shape:
        raise ContractError(f"{scores.shape} scores vs {labels.shape} labels")
    if scores.size == 0:
        raise ContractError("accuracy of an empty set is undefined")
    return float(((scores >= threshold).astype(np.int64) == labels).mean())


def _tied_ranks(values):
    """1-based ranks with tied values assigned the average rank of their run."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels):
    """Exact Mann-Whitney AUROC: P(positive outranks negative), ties at 0.5.

    Computed from tied ranks in O(n log n); equals brute-force pair counting
    bit-for-bit because both reduce to the same integer/half-integer ratio.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes present")
    ranks = _tied_ranks(scores)
    rank_sum = float(ranks[labels == 1].sum())
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def precision_at_top_n(scores, labels, ns, ids=None):
    """Precision among the N highest-scored instances for each requested N.

    Sorting is descending by score with ties broken by instance id so the
    curve is deterministic. Returns a list of (N, precision) pairs.
    """
    scores = list(scores)
    labels = list(labels)
    if ids is None:
        ids = list(range(len(scores)))
    n_total = len(scores)
    order = sorted(range(n_total), key=lambda i: (-scores[i], ids[i]))
    curve = []
    for n in ns:
        if n < 1 or n > n_total:
            raise ContractError(f"top-N {n} outside [1, {n_total}]")
        hits = sum(labels[order[i]] for i in range(n))
        curve.append((int(n), hits / n))
    return curve


def breakdown_by_paragraph_count(instances, scores, threshold=0.5):
    """Accuracy and support bucketed by the number of body chunks."""
    buckets = {}
    for inst, score in zip(instances, scores):
        buckets.setdefault(len(inst.chunks), []).append((score, inst.label))
    table = {}
    for count in sorted(buckets):
        pairs = buckets[count]
        table[count] = {
            "accuracy": accuracy([s for s, _ in pairs], [y for _, y in pairs], threshold),
            "support": len(pairs),
        }
    return table


def breakdown_by_type(scores_by_type, labels_by_type, threshold=0.5):
    """Accuracy and support for each named (Type 1-4) test set."""
    table = {}
    for name in sorted(scores_by_type):
        table[name] = {
            "accuracy": accuracy(scores_by_type[name], labels_by_type[name], threshold),
            "support": len(labels_by_type[name]),
        }
    return table


@dataclass
class EvalReport:
    """Bundle of the metrics the evaluation pipeline emits."""

    accuracy: float
    auroc: float
    n: int
    by_paragraph_count: dict = field(default_factory=dict)
    by_type: dict = field(default_factory=dict)
    precision_at_n: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_scores(cls, instances, scores, labels, top_ns=(), threshold=0.5):
        report = cls(
            accuracy=accuracy(scores, labels, threshold),
            auroc=auroc(scores, labels),
            n=len(labels),
            by_paragraph_count=breakdown_by_paragraph_count(instances, scores, threshold),
        )
        if top_ns:
            ids = [inst.id for inst in instances]
            report.precision_at_n = precision_at_top_n(scores, labels, top_ns, ids=ids)
        return report
