"""Multiple-instance bag loss over per-mask logits.

Per class, the bag score is the mean of the k largest per-mask activations;
a softmax over bag scores gives the class pmf, which is scored by
cross-entropy against the normalized multi-hot label. The pooling is locally
linear over the selected rows, so the exact gradient routes
(pmf - normalized_label)/k into the selected rows only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadParam, EmptyLabel, ShapeMismatch
from .numerics import logsumexp_rows, softmax_rows


@dataclass
class BagScore:
    pooled: np.ndarray                    # (C,) per-class k-max means
    pmf: np.ndarray | None                # (C,) softmax of pooled, once computed
    topk_index_sets: list[np.ndarray]     # per class, the k selected row indices


def compute_k(d: int, a: float) -> int:
    """Pool size k = max(1, ceil(d/a)) for d masks and divisor a >= 1."""
    if a < 1:
        raise BadParam(f"pooling divisor a must be >= 1, got {a}")
    if d < 1:
        raise BadParam(f"mask count d must be >= 1, got {d}")
    return max(1, math.ceil(d / a))


def kmax_pool(logits: np.ndarray, k: int) -> BagScore:
    """Mean of the k largest entries per class column.

    Ties at the selection boundary break toward the lowest row index, making
    the selected sets (and therefore gradients) deterministic.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ShapeMismatch(f"logits must be (d, C), got {logits.shape}")
    d, c = logits.shape
    if not 1 <= k <= d:
        raise BadParam(f"k={k} outside [1, {d}]")
    # stable sort on negated values keeps equal entries in ascending row order
    order = np.argsort(-logits, axis=0, kind="stable")
    index_sets = [np.sort(order[:k, j]) for j in range(c)]
    pooled = np.array([logits[index_sets[j], j].mean() for j in range(c)])
    return BagScore(pooled, None, index_sets)


def class_pmf(pooled: np.ndarray) -> np.ndarray:
    """Softmax over the pooled class scores (max-shifted for stability)."""
    return softmax_rows(np.asarray(pooled, dtype=np.float64)[None, :])[0]


def normalize_labels(labels: np.ndarray) -> np.ndarray:
    """Multi-hot vector scaled to a pmf; raises EmptyLabel on all-zero input."""
    y = np.asarray(labels, dtype=np.float64)
    total = y.sum()
    if total <= 0:
        raise EmptyLabel("label vector has no hot entries")
    return y / total


def mil_loss(pmf: np.ndarray, label_pmf: np.ndarray) -> float:
    """Cross-entropy -sum(label_pmf * log(pmf))."""
    p = np.asarray(pmf, dtype=np.float64)
    y = np.asarray(label_pmf, dtype=np.float64)
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    return float(-(y * np.where(y > 0, logp, 0.0)).sum())


def mil_loss_grad(
    logits: np.ndarray, labels: np.ndarray, k: int
) -> tuple[float, np.ndarray]:
    """Bag loss and its exact gradient w.r.t. the per-mask logits.

    Gradient is (pmf - label_pmf)/k on each class's selected rows, zero on
    all other rows.
    """
    bag = kmax_pool(logits, k)
    label_pmf = normalize_labels(labels)
    if label_pmf.shape != bag.pooled.shape:
        raise ShapeMismatch(
            f"labels {label_pmf.shape} vs {bag.pooled.shape[0]} classes"
        )
    pmf = class_pmf(bag.pooled)
    bag.pmf = pmf
    # cross-entropy via logsumexp: -sum(y*log p) = lse(s) - sum(y*s)
    loss = float(
        logsumexp_rows(bag.pooled[None, :])[0] - (label_pmf * bag.pooled).sum()
    )
    grad = np.zeros_like(np.asarray(logits, dtype=np.float64))
    coeff = (pmf - label_pmf) / k
    for j, rows in enumerate(bag.topk_index_sets):
        grad[rows, j] = coeff[j]
    return loss, grad
