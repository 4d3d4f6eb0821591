"""Image sources: class-labeled folder trees and prompt-driven generation.

Folder source: one subdirectory per class name under the input root, each
holding that class's single-object images. Unreadable files are skipped with
a warning and counted, never fatal.

Generated source: renders images_per_class images per class from the prompt
template using an injected text-to-image callable; the default backend needs
a locally cached diffusion model and otherwise raises ModelUnavailable.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ImageDecodeError, JobError, ModelUnavailable

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".ppm", ".pgm", ".webp")


def load_image(path) -> np.ndarray:
    """Decode to an RGB uint8 array; ImageDecodeError on any failure."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc


def collect_folder_images(root, class_names, images_per_class):
    """(class_index, image_id, image) list from class subfolders plus skipped
    paths; files visited in sorted order, at most images_per_class per class,
    decode failures logged and skipped."""
    root = Path(root)
    items = []
    skipped = []
    for class_index, name in enumerate(class_names):
        class_dir = root / name
        if not class_dir.is_dir():
            raise JobError(f"missing class folder: {class_dir}")
        taken = 0
        for path in sorted(class_dir.iterdir()):
            if taken >= images_per_class:
                break
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                image = load_image(path)
            except ImageDecodeError as exc:
                log.warning("skipping unreadable image: %s", exc)
                skipped.append(str(path))
                continue
            taken += 1
            items.append((class_index, f"{name}_{path.stem}", image))
    return items, skipped


def default_text_to_image():
    """Text-to-image callable backed by a locally cached diffusion model."""
    try:
        import torch
        from diffusers import StableDiffusionPipeline
    except ImportError as exc:
        raise ModelUnavailable(
            "text-to-image backend not installed; pass a folder source or "
            "install diffusers + torch with a cached model"
        ) from exc

    def generate(prompt: str, count: int, seed: int):
        try:
            pipe = StableDiffusionPipeline.from_pretrained(
                "CompVis/stable-diffusion-v1-4", local_files_only=True
            )
        except Exception as exc:
            raise ModelUnavailable(f"no cached diffusion model: {exc}") from exc
        generator = torch.Generator().manual_seed(seed)
        out = pipe(prompt, num_images_per_prompt=count, generator=generator)
        return [np.asarray(img.convert("RGB")) for img in out.images]

    return generate


def collect_generated_images(class_names, images_per_class, prompt_template,
                             seed, generate_fn=None):
    """(class_index, image_id, image) list rendered from prompts."""
    generate = generate_fn or default_text_to_image()
    items = []
    for class_index, name in enumerate(class_names):
        prompt = prompt_template.format(c=name)
        images = generate(prompt, images_per_class, seed + class_index)
        for i, image in enumerate(images):
            items.append((class_index, f"{name}_gen{i:04d}", np.asarray(image)))
    return items, []
