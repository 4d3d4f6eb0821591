"""Self-contained synthetic bag tasks: Gaussian instance embeddings with
disjoint rectangle masks, emitted in the standard dataset format.

Each bag carries one class; its positive rows cluster around mean_scale
along that class's axis coordinate, the rest are zero-mean noise. Masks are
disjoint, non-touching rectangles so IoU/NMS behavior stays analytic and a
ground-truth label map (positives painted with their class) can be emitted
for end-to-end evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, EmbeddingRecord, rle_encode, write_dataset
from .errors import BadSpec
from .infer import upsample_nearest
from .pgm import write_pgm


@dataclass
class GaussianBagSpec:
    num_classes: int = 5
    embedding_width: int = 64
    masks_per_image: int = 20
    positives_per_bag: int = 3
    mean_scale: float = 5.0
    noise: float = 1.0
    bag_count: int = 100
    seed: int = 0
    mask_size: int = 64
    image_size: int = 64

    def check(self) -> None:
        if not 1 <= self.positives_per_bag <= self.masks_per_image:
            raise BadSpec("positives_per_bag must lie in [1, masks_per_image]")
        if self.mean_scale <= 0 or self.noise <= 0:
            raise BadSpec("mean_scale and noise must be positive")
        if self.num_classes < 1 or self.num_classes > self.embedding_width:
            raise BadSpec("need 1 <= num_classes <= embedding_width")
        if self.bag_count < 1:
            raise BadSpec("bag_count must be >= 1")
        grid = math.ceil(math.sqrt(self.masks_per_image))
        if self.mask_size // grid < 3:
            raise BadSpec("mask_size too small to place disjoint rectangles")


@dataclass
class SynthTask:
    manifest: DatasetManifest
    records: list[EmbeddingRecord]
    gt_grids: list[np.ndarray]          # (image_size, image_size) labels 0..C
    positive_rows: list[np.ndarray] = field(default_factory=list)

    def write(self, dataset_path, gt_dir=None) -> None:
        write_dataset(self.manifest, self.records, dataset_path)
        if gt_dir is not None:
            gt_dir = Path(gt_dir)
            gt_dir.mkdir(parents=True, exist_ok=True)
            for rec, grid in zip(self.records, self.gt_grids):
                write_pgm(gt_dir / f"{rec.image_id}.pgm", grid)


def _rectangle_masks(spec: GaussianBagSpec, rng: np.random.Generator) -> np.ndarray:
    """d disjoint rectangles, one per grid cell, with >=1 px cell margins."""
    d, size = spec.masks_per_image, spec.mask_size
    grid = math.ceil(math.sqrt(d))
    cell = size // grid
    masks = np.zeros((d, size, size), dtype=bool)
    for i in range(d):
        cy, cx = divmod(i, grid)
        max_extent = cell - 2
        rh = int(rng.integers(1, max_extent + 1))
        rw = int(rng.integers(1, max_extent + 1))
        oy = int(rng.integers(1, cell - rh)) if cell - rh > 1 else 1
        ox = int(rng.integers(1, cell - rw)) if cell - rw > 1 else 1
        y0 = cy * cell + oy
        x0 = cx * cell + ox
        masks[i, y0 : y0 + rh, x0 : x0 + rw] = True
    return masks


def gen_gaussian_bags(spec: GaussianBagSpec, class_names=None) -> SynthTask:
    """Generate the full task: dataset records plus ground-truth label maps."""
    spec.check()
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(spec.num_classes))
    class_names = tuple(class_names)
    if len(class_names) != spec.num_classes:
        raise BadSpec(
            f"{len(class_names)} class names for {spec.num_classes} classes"
        )
    rng = np.random.default_rng(spec.seed)
    records, gt_grids, positive_rows = [], [], []
    for b in range(spec.bag_count):
        cls = int(rng.integers(spec.num_classes))
        positives = np.sort(
            rng.choice(spec.masks_per_image, size=spec.positives_per_bag, replace=False)
        )
        emb = rng.normal(
            0.0, spec.noise, size=(spec.masks_per_image, spec.embedding_width)
        )
        emb[positives, cls] += spec.mean_scale
        masks = _rectangle_masks(spec, rng)
        labels = np.zeros(spec.num_classes, dtype=np.uint8)
        labels[cls] = 1
        records.append(
            EmbeddingRecord(
                image_id=f"bag_{b:05d}",
                embeddings=emb.astype(np.float32),
                mask_rles=[rle_encode(m) for m in masks],
                labels=labels,
                image_h=spec.image_size,
                image_w=spec.image_size,
            )
        )
        gt = np.zeros((spec.image_size, spec.image_size), dtype=np.int32)
        for row in positives:
            up = upsample_nearest(masks[row], spec.image_size, spec.image_size)
            gt[up] = cls + 1
        gt_grids.append(gt)
        positive_rows.append(positives)

    manifest = DatasetManifest(
        class_names=class_names,
        d=spec.masks_per_image,
        E=spec.embedding_width,
        mask_h=spec.mask_size,
        mask_w=spec.mask_size,
        record_count=len(records),
        seed_note=(
            f"gaussian-bags seed={spec.seed} classes={spec.num_classes} "
            f"bags={spec.bag_count} positives={spec.positives_per_bag} "
            f"mean_scale={spec.mean_scale} noise={spec.noise}"
        ),
    )
    return SynthTask(manifest, records, gt_grids, positive_rows)
