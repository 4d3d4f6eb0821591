"""Extraction jobs: images -> backbone -> dataset file.

Each image yields one record with a single-hot label (its class). When the
backbone returns fewer than grid_points masks, rows are padded with zero
embeddings and empty masks; the per-record count of real rows is written to
the ``<output>.validity.json`` sidecar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sources, writer
from .backbone import build_backbone
from .errors import JobError

DEFAULT_PROMPT_TEMPLATE = "a photo of a {c}"


@dataclass
class ExtractionJob:
    class_names: tuple[str, ...]
    output_path: str
    source: str = "folder"                  # folder | generated
    input_dir: str | None = None            # folder source root
    images_per_class: int = 200
    prompt_template: str = DEFAULT_PROMPT_TEMPLATE
    grid_points: int = 100                  # d
    embedding_width: int = 1024             # E
    mask_size: int = 256
    backbone: str = "grid"                  # grid | sam
    sam_checkpoint: str | None = None
    seed: int = 0

    def check(self) -> None:
        if not self.class_names:
            raise JobError("at least one class name is required")
        if len(set(self.class_names)) != len(self.class_names):
            raise JobError("class names must be unique")
        if self.images_per_class < 1:
            raise JobError("images_per_class must be >= 1")
        if self.grid_points < 1 or self.embedding_width < 1 or self.mask_size < 1:
            raise JobError("grid_points, embedding_width, mask_size must be >= 1")
        if self.source not in ("folder", "generated"):
            raise JobError(f"unknown source {self.source!r}")
        if self.source == "folder" and not self.input_dir:
            raise JobError("folder source needs input_dir")


@dataclass
class ExtractionSummary:
    records: int
    skipped: list[str] = field(default_factory=list)
    padded: int = 0


def extract(job: ExtractionJob, backbone=None, generate_fn=None) -> ExtractionSummary:
    """Run the job and write the dataset file (plus validity sidecar)."""
    job.check()
    if job.source == "folder":
        items, skipped = sources.collect_folder_images(
            job.input_dir, job.class_names, job.images_per_class
        )
    else:
        items, skipped = sources.collect_generated_images(
            job.class_names,
            job.images_per_class,
            job.prompt_template,
            job.seed,
            generate_fn=generate_fn,
        )
    backbone = backbone or build_backbone(
        job.backbone,
        job.grid_points,
        job.embedding_width,
        job.mask_size,
        job.sam_checkpoint,
    )

    d = job.grid_points
    records = []
    padded = 0
    for class_index, image_id, image in items:
        out = backbone.extract(np.asarray(image))
        n = out.embeddings.shape[0]
        if n > d:
            raise JobError(f"backbone returned {n} masks, grid_points is {d}")
        if out.embeddings.shape[1] != job.embedding_width:
            raise JobError(
                f"backbone embedding width {out.embeddings.shape[1]} vs "
                f"job {job.embedding_width}"
            )
        embeddings = np.zeros((d, job.embedding_width), dtype=np.float32)
        masks = np.zeros((d, job.mask_size, job.mask_size), dtype=bool)
        embeddings[:n] = out.embeddings
        masks[:n] = out.masks
        if n < d:
            padded += 1
        records.append(
            writer.Record(
                image_id=image_id,
                embeddings=embeddings,
                masks=masks,
                label_index=class_index,
                image_h=image.shape[0],
                image_w=image.shape[1],
                valid_rows=n,
            )
        )

    manifest = writer.Manifest(
        class_names=tuple(job.class_names),
        d=d,
        E=job.embedding_width,
        mask_h=job.mask_size,
        mask_w=job.mask_size,
        seed_note=(
            f"extracted source={job.source} backbone={job.backbone} "
            f"images_per_class={job.images_per_class} seed={job.seed} "
            f"prompt_template={job.prompt_template!r}"
        ),
    )
    writer.write_dataset(manifest, records, job.output_path)
    writer.write_validity_sidecar(records, d, job.output_path)
    return ExtractionSummary(len(records), skipped, padded)
