import numpy as np
import pytest

from semhead import mlp
from semhead.dataset import DatasetManifest, EmbeddingRecord, rle_encode


def tiny_manifest(num_classes=3, d=4, E=6, mask=8, n=0, names=None):
    return DatasetManifest(
        class_names=names or tuple(f"c{i}" for i in range(num_classes)),
        d=d,
        E=E,
        mask_h=mask,
        mask_w=mask,
        record_count=n,
    )


def make_record(manifest, rng, image_id="img", labels=None, image_size=16):
    d, e = manifest.d, manifest.E
    if labels is None:
        labels = np.zeros(manifest.num_classes, dtype=np.uint8)
        labels[int(rng.integers(manifest.num_classes))] = 1
    masks = rng.random((d, manifest.mask_h, manifest.mask_w)) > 0.5
    return EmbeddingRecord(
        image_id=image_id,
        embeddings=rng.normal(size=(d, e)).astype(np.float32),
        mask_rles=[rle_encode(m) for m in masks],
        labels=np.asarray(labels, dtype=np.uint8),
        image_h=image_size,
        image_w=image_size,
    )


def finite_difference_param_grads(params, loss_fn, h=1e-4):
    """Central finite differences of loss_fn(params) over every coordinate."""
    grads = mlp.MlpParams(
        params.dims,
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )
    for arrs, outs in ((params.weights, grads.weights), (params.biases, grads.biases)):
        for arr, out in zip(arrs, outs):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = arr[idx]
                arr[idx] = old + h
                up = loss_fn(params)
                arr[idx] = old - h
                down = loss_fn(params)
                arr[idx] = old
                out[idx] = (up - down) / (2.0 * h)
    return grads


def max_rel_err(analytic, numeric, floor=1e-6):
    worst = 0.0
    for ga, gn in zip(
        analytic.weights + analytic.biases, numeric.weights + numeric.biases
    ):
        denom = np.maximum(np.maximum(np.abs(ga), np.abs(gn)), floor)
        worst = max(worst, float((np.abs(ga - gn) / denom).max()))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
