"""Teach class semantics to class-agnostic segmentation masks.

Trains a small classifier head on per-mask embeddings with a k-max-pooled
multiple-instance bag loss plus entropy-gated uncertainty distillation, runs
threshold + NMS inference to per-pixel label maps, and scores them with
mIoU / mAP50.
"""

from . import config, dataset, distill, infer, metrics, mil, mlp, synth, trainer

__all__ = [
    "config",
    "dataset",
    "distill",
    "infer",
    "metrics",
    "mil",
    "mlp",
    "synth",
    "trainer",
]

__version__ = "0.1.0"
