"""Shared numerically-stable primitives (softmax family, entropy).

All functions compute in float64 regardless of input dtype.
"""

from __future__ import annotations

import numpy as np


def logsumexp_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise log(sum(exp(x))) with the max-shift trick."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=-1, keepdims=True))).squeeze(-1)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax; every output row sums to 1."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def entropy_rows(probs: np.ndarray) -> np.ndarray:
    """Row-wise Shannon entropy in nats, with 0*log(0) := 0.

    Clamped to [0, ln(C)] so roundoff cannot violate the analytic bounds.
    """
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    h = -terms.sum(axis=-1)
    return np.clip(h, 0.0, np.log(p.shape[-1]))
