"""Inference: per-mask class scores -> confidence filter -> mask NMS ->
per-pixel semantic label map.

Label maps use 0 for background and class_index + 1 for object classes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mlp
from .errors import BadParam, ShapeMismatch
from .numerics import softmax_rows


@dataclass
class Candidate:
    mask_index: int
    class_index: int   # 0-based classifier class
    score: float


@dataclass
class SemanticMask:
    labels: np.ndarray                 # (image_h, image_w) over {0..C}, 0=background
    candidates: list[Candidate] = field(default_factory=list)


def score_masks(params: mlp.MlpParams, embeddings: np.ndarray) -> np.ndarray:
    """Row-wise class pmfs for the d mask embeddings."""
    logits, _ = mlp.forward(params, embeddings)
    return softmax_rows(logits)


def filter_by_confidence(pmfs: np.ndarray, conf_threshold: float) -> list[Candidate]:
    """One candidate per mask whose best class probability strictly exceeds
    the threshold; argmax ties resolve to the lowest class index."""
    if not 0.0 < conf_threshold < 1.0:
        raise BadParam(f"confidence threshold {conf_threshold} outside (0, 1)")
    pmfs = np.asarray(pmfs, dtype=np.float64)
    out = []
    for i in range(pmfs.shape[0]):
        j = int(np.argmax(pmfs[i]))
        score = float(pmfs[i, j])
        if score > conf_threshold:
            out.append(Candidate(i, j, score))
    return out


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary grids; 0 when both are empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def nms(
    candidates: list[Candidate],
    masks: np.ndarray,
    nms_threshold: float,
    class_agnostic: bool = False,
) -> list[Candidate]:
    """Greedy suppression in descending score order (ties: lower mask index).

    A candidate is dropped iff its IoU with an already-kept candidate of the
    same class strictly exceeds the threshold; class_agnostic=True compares
    against kept candidates of any class.
    """
    if not 0.0 < nms_threshold < 1.0:
        raise BadParam(f"nms threshold {nms_threshold} outside (0, 1)")
    order = sorted(candidates, key=lambda c: (-c.score, c.mask_index))
    kept: list[Candidate] = []
    for cand in order:
        suppressed = False
        for prior in kept:
            if not class_agnostic and prior.class_index != cand.class_index:
                continue
            if mask_iou(masks[cand.mask_index], masks[prior.mask_index]) > nms_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(cand)
    return kept


def upsample_nearest(mask: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize with floor index mapping."""
    mask = np.asarray(mask)
    in_h, in_w = mask.shape
    rows = (np.arange(out_h, dtype=np.int64) * in_h) // out_h
    cols = (np.arange(out_w, dtype=np.int64) * in_w) // out_w
    return mask[np.ix_(rows, cols)]


def assemble_semantic_mask(
    kept: list[Candidate], masks: np.ndarray, image_h: int, image_w: int
) -> SemanticMask:
    """Paint kept masks into a label grid at image resolution.

    Pixels covered by several candidates take the highest-scoring one; exact
    score ties go to the lower mask index. Uncovered pixels stay background.
    """
    grid = np.zeros((image_h, image_w), dtype=np.int32)
    # paint lowest priority first so the highest-priority class lands on top
    order = sorted(kept, key=lambda c: (c.score, -c.mask_index))
    for cand in order:
        up = upsample_nearest(np.asarray(masks[cand.mask_index], dtype=bool),
                              image_h, image_w)
        grid[up] = cand.class_index + 1
    return SemanticMask(grid, list(kept))
