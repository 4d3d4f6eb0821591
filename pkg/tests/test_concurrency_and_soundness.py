"""Concurrency contracts and validate_record soundness."""

import threading

import numpy as np

from conftest import make_record, tiny_manifest
from semhead import dataset, infer, metrics, mlp, trainer
from semhead.cli import main
from semhead.errors import EXIT_OK


def test_reader_shared_across_threads(tmp_path):
    manifest = tiny_manifest(n=8)
    rng = np.random.default_rng(0)
    records = [make_record(manifest, rng, image_id=f"r{i}") for i in range(8)]
    path = tmp_path / "d.usds"
    dataset.write_dataset(manifest, records, path)

    errors = []
    with dataset.open_dataset(path) as ds:
        def reader(worker):
            try:
                for turn in range(50):
                    i = (worker + turn) % len(ds)
                    rec = ds[i]
                    assert rec.image_id == f"r{i}"
                    assert rec.embeddings.tobytes() == records[i].embeddings.tobytes()
            except Exception as exc:  # pragma: no cover - failure reporting
                errors.append(exc)

        threads = [threading.Thread(target=reader, args=(w,)) for w in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    assert errors == []


def test_infer_threads_flag_byte_identical(tmp_path):
    gen = ["gen-bags", "--out", str(tmp_path / "d.usds"), "--seed", "4",
           "--num-classes", "3", "--bags", "12", "--masks-per-image", "8",
           "--embedding-width", "16", "--positives", "2", "--mask-size", "16",
           "--image-size", "16"]
    assert main(gen) == EXIT_OK
    assert main(["train-teacher", "--dataset", str(tmp_path / "d.usds"),
                 "--out", str(tmp_path / "w.weights"), "--epochs", "3",
                 "--hidden-dims", "16,8,8", "--seed", "1"]) == EXIT_OK
    for threads in ("1", "3"):
        assert main(["infer", "--dataset", str(tmp_path / "d.usds"),
                     "--weights", str(tmp_path / "w.weights"),
                     "--out", str(tmp_path / f"pred{threads}"),
                     "--threads", threads]) == EXIT_OK
    files = sorted(p.name for p in (tmp_path / "pred1").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "pred3").iterdir())
    for name in files:
        assert (tmp_path / "pred1" / name).read_bytes() == (
            tmp_path / "pred3" / name
        ).read_bytes()


def test_infer_empty_dataset_zero_outputs(tmp_path):
    manifest = tiny_manifest(d=4, E=6, n=0)
    dataset.write_dataset(manifest, [], tmp_path / "empty.usds")
    params = mlp.init_params(0, (6, 8, 8, 8, 3))
    mlp.save_weights(params, tmp_path / "w.weights")
    rc = main(["infer", "--dataset", str(tmp_path / "empty.usds"),
               "--weights", str(tmp_path / "w.weights"),
               "--out", str(tmp_path / "pred")])
    assert rc == EXIT_OK
    assert list((tmp_path / "pred").glob("*.pgm")) == []


def test_validation_soundness_downstream_accepts_validated_records():
    # any record passing validation flows through training prep, scoring,
    # NMS, assembly, and IoU accumulation without raising
    manifest = tiny_manifest(num_classes=3, d=5, E=6, mask=8)
    rng = np.random.default_rng(123)
    params = mlp.init_params(0, (6, 8, 8, 8, 3))
    acc = metrics.IouAccumulator(3)
    for i in range(25):
        rec = make_record(manifest, rng, image_id=f"r{i}")
        assert dataset.validate_record(rec, manifest) == []
        x, y = trainer.materialize([rec], 3)
        assert x.shape == (1, 5, 6)
        pmfs = infer.score_masks(params, x[0])
        cands = infer.filter_by_confidence(pmfs, 0.3)
        masks = rec.decode_masks(8, 8)
        kept = infer.nms(cands, masks, 0.5)
        sem = infer.assemble_semantic_mask(kept, masks, rec.image_h, rec.image_w)
        metrics.accumulate_iou(
            sem.labels,
            np.zeros_like(sem.labels),
            acc,
        )
