"""Mask/embedding backbones.

A backbone maps one RGB image to at most d (embedding, binary mask) pairs.
GridBackbone is a dependency-free stand-in that tiles the image with a
uniform grid and embeds each region's color/position statistics through a
fixed random projection; it keeps the whole pipeline runnable offline.
SamBackbone wires a real segmentation foundation model when its weights are
installed and raises ModelUnavailable otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelUnavailable

_PROJECTION_SEED = 0x5E6D


@dataclass
class BackboneOutput:
    embeddings: np.ndarray   # (n, E) float32, n <= d
    masks: np.ndarray        # (n, mask_h, mask_w) bool


class GridBackbone:
    """Deterministic tile backbone: d masks from a ceil(sqrt(d))^2 grid."""

    def __init__(self, grid_points: int, embedding_width: int = 1024,
                 mask_size: int = 256):
        self.grid_points = grid_points
        self.embedding_width = embedding_width
        self.mask_size = mask_size
        rng = np.random.default_rng(_PROJECTION_SEED)
        self._projection = rng.normal(
            scale=1.0 / math.sqrt(34), size=(34, embedding_width)
        ).astype(np.float32)

    def _region_features(self, image: np.ndarray, y0, y1, x0, x1) -> np.ndarray:
        region = image[y0:y1, x0:x1].reshape(-1, 3).astype(np.float64) / 255.0
        h, w = image.shape[:2]
        feats = np.empty(34)
        feats[0:3] = region.mean(axis=0)
        feats[3:6] = region.std(axis=0)
        feats[6] = (y0 + y1) / (2.0 * h)
        feats[7] = (x0 + x1) / (2.0 * w)
        feats[8] = (y1 - y0) / h
        feats[9] = (x1 - x0) / w
        for c in range(3):
            hist, _ = np.histogram(region[:, c], bins=8, range=(0.0, 1.0))
            feats[10 + 8 * c : 18 + 8 * c] = hist / max(len(region), 1)
        return feats

    def extract(self, image: np.ndarray) -> BackboneOutput:
        h, w = image.shape[:2]
        d = self.grid_points
        g = math.ceil(math.sqrt(d))
        size = self.mask_size
        embeddings = np.empty((d, self.embedding_width), dtype=np.float32)
        masks = np.zeros((d, size, size), dtype=bool)
        for i in range(d):
            r, c = divmod(i, g)
            y0, y1 = r * h // g, (r + 1) * h // g
            x0, x1 = c * w // g, (c + 1) * w // g
            feats = self._region_features(image, y0, max(y1, y0 + 1),
                                          x0, max(x1, x0 + 1))
            embeddings[i] = feats @ self._projection
            my0, my1 = r * size // g, (r + 1) * size // g
            mx0, mx1 = c * size // g, (c + 1) * size // g
            masks[i, my0:my1, mx0:mx1] = True
        return BackboneOutput(embeddings, masks)


class SamBackbone:
    """Automatic-mode segmentation foundation model behind the same interface.

    Needs the ``segment_anything`` package and a local checkpoint; prompts
    the model with a uniform grid of grid_points points and flattens each
    mask's decoder output tokens to the embedding row.
    """

    def __init__(self, checkpoint_path, grid_points: int,
                 model_type: str = "vit_h", mask_size: int = 256):
        try:
            import torch  # noqa: F401
            from segment_anything import sam_model_registry  # noqa: F401
        except ImportError as exc:
            raise ModelUnavailable(
                "segment-anything backend not installed; use the grid backbone "
                "or install segment_anything + torch"
            ) from exc
        import os

        if not checkpoint_path or not os.path.exists(checkpoint_path):
            raise ModelUnavailable(f"checkpoint not found: {checkpoint_path}")
        self.grid_points = grid_points
        self.mask_size = mask_size
        self.embedding_width = 1024  # 4 x 256 decoder output tokens, flattened
        self._sam = sam_model_registry[model_type](checkpoint=checkpoint_path)

    def extract(self, image: np.ndarray) -> BackboneOutput:
        side = math.ceil(math.sqrt(self.grid_points))
        from segment_anything import SamAutomaticMaskGenerator

        generator = SamAutomaticMaskGenerator(self._sam, points_per_side=side)
        raw = generator.generate(image)
        n = min(len(raw), self.grid_points)
        masks = np.zeros((n, self.mask_size, self.mask_size), dtype=bool)
        embeddings = np.zeros((n, self.embedding_width), dtype=np.float32)
        for i, item in enumerate(raw[:n]):
            seg = item["segmentation"]
            ys = (np.arange(self.mask_size) * seg.shape[0]) // self.mask_size
            xs = (np.arange(self.mask_size) * seg.shape[1]) // self.mask_size
            masks[i] = seg[np.ix_(ys, xs)]
            tokens = item.get("mask_tokens")
            if tokens is not None:
                embeddings[i] = np.asarray(tokens, dtype=np.float32).reshape(-1)[
                    : self.embedding_width
                ]
        return BackboneOutput(embeddings, masks)


def build_backbone(name: str, grid_points: int, embedding_width: int,
                   mask_size: int, sam_checkpoint=None):
    if name == "grid":
        return GridBackbone(grid_points, embedding_width, mask_size)
    if name == "sam":
        return SamBackbone(sam_checkpoint, grid_points, mask_size=mask_size)
    raise ModelUnavailable(f"unknown backbone {name!r}")
