"""Feature-based baseline: headline/body similarity features + logistic model."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, EmptyInputError
from .layers import PAD_ID

FEATURE_NAMES = (
    "tf_cosine",
    "binary_cosine",
    "headline_overlap",
    "shared_1gram",
    "shared_2gram",
    "shared_3gram",
    "length_ratio",
)


def _ngrams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def _cosine(a, b):
    num = sum(v * b.get(k, 0) for k, v in a.items())
    den = np.sqrt(sum(v * v for v in a.values())) * np.sqrt(sum(v * v for v in b.values()))
    return float(num / den) if den else 0.0


def extract_features(headline_ids, chunks):
    """Fixed-order similarity features between a headline and body chunks.

    N-grams are taken within chunks, never across chunk boundaries, so every
    feature is invariant to the order in which paragraphs are concatenated.
    """
    headline = [t for t in headline_ids if t != PAD_ID]
    body_chunks = [[t for t in c if t != PAD_ID] for c in chunks]
    body = [t for c in body_chunks for t in c]
    if not headline or not body:
        raise EmptyInputError("features need a nonempty headline and body")

    h_counts = Counter(headline)
    b_counts = Counter(body)
    h_set, b_set = set(headline), set(body)

    shared = []
    for n in (1, 2, 3):
        h_ngrams = set(_ngrams(headline, n))
        b_ngrams = set()
        for c in body_chunks:
            b_ngrams.update(_ngrams(c, n))
        shared.append(len(h_ngrams & b_ngrams) / max(1, len(h_ngrams)))

    return np.array(
        [
            _cosine(h_counts, b_counts),
            len(h_set & b_set) / np.sqrt(len(h_set) * len(b_set)),
            len(h_set & b_set) / len(h_set),
            shared[0],
            shared[1],
            shared[2],
            len(headline) / len(body),
        ],
        dtype=np.float64,
    )


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float

    def score(self, features):
        features = np.asarray(features, dtype=np.float64)
        if features.shape != self.weights.shape:
            raise ContractError(f"feature vector {features.shape} vs weights {self.weights.shape}")
        z = float(self.weights @ features + self.bias)
        if z >= 0:
            return 1.0 / (1.0 + np.exp(-z))
        e = np.exp(z)
        return float(e / (1.0 + e))


def score(model, features):
    return model.score(features)


def train_logistic(features, labels, lr=0.5, epochs=500, seed=0):
    """Full-batch gradient descent on mean binary cross-entropy."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ContractError("train_logistic needs a nonempty [n x d] feature matrix")
    if x.shape[0] != y.shape[0]:
        raise ContractError(f"{x.shape[0]} feature rows vs {y.shape[0]} labels")
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, size=x.shape[1])
    b = 0.0
    n = x.shape[0]
    for _ in range(epochs):
        z = x @ w + b
        p = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        err = p - y
        w -= lr * (x.T @ err) / n
        b -= lr * float(err.mean())
    return LogisticModel(weights=w, bias=b)


def baseline_ip_score(model, headline_ids, chunks):
    """Per-paragraph logistic scores and their max (same rule as neural IP)."""
    chunks = [c for c in chunks if any(t != PAD_ID for t in c)]
    if not chunks:
        raise EmptyInputError("no non-empty paragraphs")
    scores = [model.score(extract_features(headline_ids, [c])) for c in chunks]
    return max(scores), scores


def instance_features(instances):
    """Feature matrix + label vector for a list of LabeledInstances."""
    x = np.stack([extract_features(inst.headline_ids, inst.chunks) for inst in instances])
    y = np.array([inst.label for inst in instances], dtype=np.int64)
    return x, y


def write_features_csv(path, instances):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("id", "label") + FEATURE_NAMES)
        for inst in instances:
            fv = extract_features(inst.headline_ids, inst.chunks)
            writer.writerow([inst.id, inst.label] + [repr(v) for v in fv])
