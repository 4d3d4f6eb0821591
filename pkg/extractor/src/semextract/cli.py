"""Extraction CLI: flat ``key = value`` job files plus flag overrides.

Job keys: classes, source, input_dir, images_per_class, prompt_template,
grid_points, embedding_width, mask_size, backbone, sam_checkpoint, seed, out.
Flags win over the file. Exit codes: 0 ok, 2 config, 3 data, 4 model, 5 io.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ExtractorError, JobError
from .job import DEFAULT_PROMPT_TEMPLATE, ExtractionJob, extract

_KEYS = {
    "classes": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
    "source": str,
    "input_dir": str,
    "images_per_class": int,
    "prompt_template": str,
    "grid_points": int,
    "embedding_width": int,
    "mask_size": int,
    "backbone": str,
    "sam_checkpoint": str,
    "seed": int,
    "out": str,
}


def parse_job_file(path) -> dict:
    values: dict = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise JobError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _KEYS:
                raise JobError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _KEYS[key](value)
            except ValueError as exc:
                raise JobError(f"{path}:{lineno}: bad value for {key}: {exc}")
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="semextract",
        description="Export per-mask embeddings, masks, and labels from "
        "class-labeled images into the engine's dataset format.",
    )
    p.add_argument("--config", help="flat key = value job file")
    p.add_argument("--classes", help="comma-separated class names")
    p.add_argument("--source", choices=("folder", "generated"))
    p.add_argument("--input-dir", dest="input_dir",
                   help="root of per-class image subfolders")
    p.add_argument("--images-per-class", type=int, dest="images_per_class")
    p.add_argument("--prompt-template", dest="prompt_template",
                   help=f"default: {DEFAULT_PROMPT_TEMPLATE!r}")
    p.add_argument("--grid-points", type=int, dest="grid_points",
                   help="masks per image (d)")
    p.add_argument("--embedding-width", type=int, dest="embedding_width")
    p.add_argument("--mask-size", type=int, dest="mask_size")
    p.add_argument("--backbone", choices=("grid", "sam"))
    p.add_argument("--sam-checkpoint", dest="sam_checkpoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        values = parse_job_file(args.config) if args.config else {}
        for key in _KEYS:
            flag = getattr(args, key, None)
            if flag is not None:
                values[key] = flag
        if "classes" in values and isinstance(values["classes"], str):
            values["classes"] = tuple(
                x.strip() for x in values["classes"].split(",") if x.strip()
            )
        if "classes" not in values or "out" not in values:
            raise JobError("classes and out are required")
        out = values.pop("out")
        job = ExtractionJob(
            class_names=tuple(values.pop("classes")), output_path=out, **values
        )
        summary = extract(job)
        print(
            f"wrote {summary.records} records to {out} "
            f"(skipped {len(summary.skipped)}, padded {summary.padded})"
        )
        return 0
    except ExtractorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
