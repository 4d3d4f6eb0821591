"""Evaluation: dataset-level per-class IoU/mIoU on label maps and mAP at the
50% IoU threshold on scored mask proposals.

Label grids use 0 for background and 1..C for object classes. IoU counts are
accumulated across all images before the final ratio (dataset-level IoU, not
per-image averaging); accumulators merge associatively. AP uses all-point
interpolation (precision envelope over every recall breakpoint).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import LabelOutOfRange, NoGroundTruth, ShapeMismatch
from .infer import mask_iou


@dataclass
class IouAccumulator:
    num_classes: int                      # object classes, excluding background
    intersection: np.ndarray = None       # (C+1,) pixel counts incl. background
    union: np.ndarray = None

    def __post_init__(self):
        if self.intersection is None:
            self.intersection = np.zeros(self.num_classes + 1, dtype=np.int64)
        if self.union is None:
            self.union = np.zeros(self.num_classes + 1, dtype=np.int64)

    def merge(self, other: "IouAccumulator") -> "IouAccumulator":
        if other.num_classes != self.num_classes:
            raise ShapeMismatch("accumulators cover different class counts")
        return IouAccumulator(
            self.num_classes,
            self.intersection + other.intersection,
            self.union + other.union,
        )


def accumulate_iou(
    pred: np.ndarray, gt: np.ndarray, acc: IouAccumulator
) -> IouAccumulator:
    """Add one image's per-class intersection/union pixel counts to acc."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    n = acc.num_classes
    for grid in (pred, gt):
        if grid.size and (grid.min() < 0 or grid.max() > n):
            raise LabelOutOfRange(f"labels must lie in 0..{n}")
    for c in range(n + 1):
        p = pred == c
        g = gt == c
        acc.intersection[c] += np.logical_and(p, g).sum()
        acc.union[c] += np.logical_or(p, g).sum()
    return acc


def per_class_iou(acc: IouAccumulator) -> np.ndarray:
    """IoU per class index 0..C; NaN where the class never appears at all."""
    with np.errstate(invalid="ignore"):
        return np.where(
            acc.union > 0, acc.intersection / np.maximum(acc.union, 1), np.nan
        )


def miou(acc: IouAccumulator, include_background: bool = True) -> float:
    """Mean IoU over classes with nonzero union.

    include_background=False restricts the mean to the object classes.
    """
    ious = per_class_iou(acc)
    if not include_background:
        ious = ious[1:]
    present = ~np.isnan(ious)
    if not present.any():
        raise NoGroundTruth("no class has any ground-truth or predicted pixels")
    return float(ious[present].mean())


def extract_gt_instances(grid: np.ndarray) -> list[tuple[int, np.ndarray]]:
    """Instances as (class_label, boolean mask) via 4-connected components.

    Background (0) produces no instances; diagonal contact does not join.
    """
    grid = np.asarray(grid)
    if grid.size and grid.min() < 0:
        raise LabelOutOfRange("labels must be non-negative")
    h, w = grid.shape
    seen = np.zeros((h, w), dtype=bool)
    instances = []
    for y in range(h):
        for x in range(w):
            label = int(grid[y, x])
            if label == 0 or seen[y, x]:
                continue
            mask = np.zeros((h, w), dtype=bool)
            queue = deque([(y, x)])
            seen[y, x] = True
            while queue:
                cy, cx = queue.popleft()
                mask[cy, cx] = True
                for ny, nx in ((cy - 1, cx), (cy + 1, cx), (cy, cx - 1), (cy, cx + 1)):
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] \
                            and grid[ny, nx] == label:
                        seen[ny, nx] = True
                        queue.append((ny, nx))
            instances.append((label, mask))
    return instances


def average_precision(
    scored_hits: list[tuple[float, bool]], num_gt: int
) -> float:
    """All-point interpolated AP from (score, is_tp) pairs already ranked."""
    if num_gt == 0:
        return float("nan")
    if not scored_hits:
        return 0.0
    tp = np.cumsum([hit for _, hit in scored_hits])
    ranks = np.arange(1, len(scored_hits) + 1)
    precision = tp / ranks
    recall = tp / num_gt
    # precision envelope: max precision at this recall or beyond
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev_recall = 0.0
    ap = 0.0
    for r, p in zip(recall, envelope):
        if r > prev_recall:
            ap += (r - prev_recall) * p
            prev_recall = r
    return float(ap)


def map50(
    predictions: dict[str, list[tuple[int, float, np.ndarray]]],
    gt_instances: dict[str, list[tuple[int, np.ndarray]]],
    num_classes: int,
    iou_threshold: float = 0.5,
) -> tuple[dict[int, float], float]:
    """Per-class AP and its mean over classes with ground-truth instances.

    predictions: image_id -> [(class_label, score, mask)]; gt_instances:
    image_id -> [(class_label, mask)]. A prediction is a true positive when
    its best-IoU unmatched same-class GT instance in the same image reaches
    the threshold; each GT matches at most once, in descending score order
    (ties: image id, then listing order).
    """
    per_class: dict[int, float] = {}
    image_ids = sorted(gt_instances.keys())
    for label in range(1, num_classes + 1):
        gt_count = sum(
            1 for img in image_ids for c, _ in gt_instances[img] if c == label
        )
        ranked = sorted(
            (
                (score, img, order, mask)
                for img in sorted(predictions.keys())
                for order, (c, score, mask) in enumerate(predictions[img])
                if c == label
            ),
            key=lambda t: (-t[0], t[1], t[2]),
        )
        if gt_count == 0:
            per_class[label] = float("nan")
            continue
        matched: dict[str, set[int]] = {img: set() for img in image_ids}
        hits = []
        for score, img, _, mask in ranked:
            same_class = [
                (i, g)
                for i, (c, g) in enumerate(gt_instances.get(img, []))
                if c == label and i not in matched[img]
            ]
            best_iou, best_i = 0.0, None
            for i, g in same_class:
                iou = mask_iou(mask, g)
                if iou > best_iou:
                    best_iou, best_i = iou, i
            if best_i is not None and best_iou >= iou_threshold:
                matched[img].add(best_i)
                hits.append((score, True))
            else:
                hits.append((score, False))
        per_class[label] = average_precision(hits, gt_count)
    values = [v for v in per_class.values() if not np.isnan(v)]
    if not values:
        raise NoGroundTruth("no class has ground-truth instances")
    return per_class, float(np.mean(values))


@dataclass
class EvalReport:
    class_names: tuple[str, ...]
    per_class_iou: dict[str, float | None]
    miou: float
    per_class_ap50: dict[str, float | None]
    map50: float
    image_count: int
    gt_instance_count: int
    config_hash: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "class_names": list(self.class_names),
                "per_class_iou": self.per_class_iou,
                "miou": self.miou,
                "per_class_ap50": self.per_class_ap50,
                "map50": self.map50,
                "counts": {
                    "images": self.image_count,
                    "gt_instances": self.gt_instance_count,
                },
                "config_hash": self.config_hash,
            },
            sort_keys=True,
            indent=2,
        )

    def to_table(self) -> str:
        width = max(len("background"), *(len(n) for n in self.class_names), 5)
        lines = [f"{'class':<{width}}  {'iou':>8}  {'ap50':>8}"]

        def fmt(v):
            return "    -" if v is None else f"{v:8.4f}"

        rows = [("background", self.per_class_iou.get("background"), None)]
        rows += [
            (n, self.per_class_iou.get(n), self.per_class_ap50.get(n))
            for n in self.class_names
        ]
        for name, iou_v, ap_v in rows:
            lines.append(f"{name:<{width}}  {fmt(iou_v):>8}  {fmt(ap_v):>8}")
        lines.append(f"{'mIoU':<{width}}  {self.miou:8.4f}")
        lines.append(f"{'mAP50':<{width}}  {'':8}  {self.map50:8.4f}")
        return "\n".join(lines) + "\n"
