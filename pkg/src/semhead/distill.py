"""Entropy-gated distillation: teacher statistics, bad-prediction sets, and
the uniformity-seeking loss on the student's bad rows.

A mask index is "bad" when the frozen teacher is either highly uncertain
about it (entropy above the threshold) or confidently predicts a class that
is absent from the image's labels. Both comparisons are strict, so a row
whose entropy equals the threshold exactly lands in neither component.
Minimizing the loss drives the student's bad rows toward the uniform pmf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mlp
from .errors import BadParam, EmptyLabel, ShapeMismatch
from .numerics import entropy_rows, logsumexp_rows, softmax_rows


@dataclass
class TeacherStats:
    logits: np.ndarray    # (d, C)
    probs: np.ndarray     # (d, C) row softmax
    preds: np.ndarray     # (d,) row argmax, lowest index on ties
    entropy: np.ndarray   # (d,) nats, in [0, ln C]


@dataclass
class BadSet:
    indices: np.ndarray          # sorted union of the two components
    high_entropy: np.ndarray     # entropy > threshold
    confident_wrong: np.ndarray  # entropy < threshold and predicted class absent

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class LossWeights:
    mil_weight: float = 1.0           # lambda1
    uncertainty_weight: float = 0.15  # lambda2
    entropy_threshold: float = 0.0    # nats, must lie in (0, ln C)

    def check(self, num_classes: int) -> None:
        if self.mil_weight < 0 or self.uncertainty_weight < 0:
            raise BadParam("loss weights must be non-negative")
        if not 0.0 < self.entropy_threshold < np.log(num_classes):
            raise BadParam(
                f"entropy threshold {self.entropy_threshold} outside "
                f"(0, ln {num_classes})"
            )


def default_entropy_threshold(num_classes: int) -> float:
    """Half the maximum possible entropy, ln(C)/2 nats."""
    return 0.5 * float(np.log(num_classes))


def teacher_stats(teacher: mlp.MlpParams, embeddings: np.ndarray) -> TeacherStats:
    """Per-mask probabilities, argmax predictions, and entropies.

    The teacher is treated as a frozen constant; nothing here mutates it.
    """
    logits, _ = mlp.forward(teacher, embeddings)
    probs = softmax_rows(logits)
    preds = np.argmax(probs, axis=1)
    entropy = entropy_rows(probs)
    return TeacherStats(logits, probs, preds, entropy)


def bad_set(stats: TeacherStats, labels: np.ndarray, entropy_threshold: float) -> BadSet:
    """Indices where the teacher is uncertain or confidently wrong.

    "Wrong" under multi-hot labels means the predicted class is not among
    the image's present classes.
    """
    labels = np.asarray(labels)
    if labels.sum() == 0:
        raise EmptyLabel("bad set needs at least one present class")
    if labels.shape[0] != stats.probs.shape[1]:
        raise ShapeMismatch(
            f"labels {labels.shape} vs {stats.probs.shape[1]} classes"
        )
    high = stats.entropy > entropy_threshold
    wrong = (stats.entropy < entropy_threshold) & (labels[stats.preds] == 0)
    return BadSet(
        indices=np.flatnonzero(high | wrong),
        high_entropy=np.flatnonzero(high),
        confident_wrong=np.flatnonzero(wrong),
    )


def uncertainty_loss(
    student_logits: np.ndarray, bad: BadSet
) -> tuple[float, np.ndarray]:
    """Sum over bad rows of -sum_j log softmax_j, and its exact gradient.

    Per bad row the loss is C*logsumexp(row) - sum(row), minimized (value
    C*ln C) exactly at uniform logits; the gradient per bad row is
    C*softmax(row) - 1, zero rows elsewhere. Image-level averaging (the 1/N)
    is the caller's job.
    """
    logits = np.asarray(student_logits, dtype=np.float64)
    d, c = logits.shape
    grad = np.zeros_like(logits)
    idx = np.asarray(bad.indices, dtype=np.int64)
    if idx.size == 0:
        return 0.0, grad
    rows = logits[idx]
    loss = float((c * logsumexp_rows(rows) - rows.sum(axis=1)).sum())
    grad[idx] = c * softmax_rows(rows) - 1.0
    return loss, grad


def combined_loss(
    mil_pair: tuple[float, np.ndarray],
    uncertainty_pair: tuple[float, np.ndarray],
    weights: LossWeights,
) -> tuple[float, np.ndarray]:
    """Weighted sum of the two losses; same affine combination on gradients."""
    mil_val, mil_grad = mil_pair
    unc_val, unc_grad = uncertainty_pair
    if mil_grad.shape != unc_grad.shape:
        raise ShapeMismatch(f"{mil_grad.shape} vs {unc_grad.shape}")
    loss = weights.mil_weight * mil_val + weights.uncertainty_weight * unc_val
    grad = weights.mil_weight * mil_grad + weights.uncertainty_weight * unc_grad
    return float(loss), grad
