"""Command-line entry point.

Subcommands: inspect, gen-bags, train-teacher, train-student, infer, eval.
Exit codes: 0 ok, 2 config, 3 data, 4 dims, 5 io. Config comes from an
optional ``key = value`` file plus flags; flags win. Every artifact embeds
the config hash, and eval refuses mixed-hash prediction inputs unless
--force is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset, infer, metrics, mlp, synth, trainer
from .config import RunConfig, apply_overrides, load_config
from .errors import (
    ConfigError,
    DataError,
    DimsMismatch,
    EngineError,
    EXIT_IO,
    EXIT_OK,
    IdSetMismatch,
)
from .pgm import read_pgm, write_pgm


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--classes", help="comma-separated class names")
    p.add_argument("--a", type=float, help="k-max pooling divisor")
    p.add_argument("--entropy-threshold", type=float, dest="entropy_threshold",
                   help="bad-set entropy threshold in nats (0 = ln(C)/2)")
    p.add_argument("--conf-threshold", type=float, dest="conf_threshold")
    p.add_argument("--nms-threshold", type=float, dest="nms_threshold")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lambda1", type=float, help="bag-loss weight")
    p.add_argument("--lambda2", type=float, help="uncertainty-loss weight")
    p.add_argument("--threads", type=int)
    p.add_argument("--holdout-fraction", type=float, dest="holdout_fraction")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--hidden-dims", dest="hidden_dims",
                   help="comma-separated hidden layer widths")


_OVERRIDE_KEYS = (
    "a", "entropy_threshold", "conf_threshold", "nms_threshold", "seed",
    "epochs", "lr", "batch_size", "lambda1", "lambda2", "threads",
    "holdout_fraction", "checkpoint_every",
)


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    if getattr(args, "classes", None):
        overrides["classes"] = tuple(
            x.strip() for x in args.classes.split(",") if x.strip()
        )
    if getattr(args, "hidden_dims", None):
        overrides["hidden_dims"] = tuple(
            int(x) for x in args.hidden_dims.split(",") if x.strip()
        )
    return apply_overrides(cfg, overrides)


def _check_classes(cfg: RunConfig, manifest: dataset.DatasetManifest) -> None:
    if cfg.classes and tuple(cfg.classes) != tuple(manifest.class_names):
        raise ConfigError(
            f"--classes {cfg.classes} does not match dataset classes "
            f"{manifest.class_names}"
        )


def _write_weights_with_meta(params, path, cfg_hash, seed, role, epochs_trained):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mlp.save_weights(params, path)
    meta = {
        "config_hash": cfg_hash,
        "dims": list(params.dims),
        "seed": seed,
        "role": role,
        "epochs_trained": epochs_trained,
    }
    Path(str(path) + ".meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def cmd_inspect(args) -> int:
    with dataset.open_dataset(args.dataset) as ds:
        manifest = ds.manifest
        print(manifest.to_json())
        counts = np.zeros(manifest.num_classes, dtype=np.int64)
        violations = []
        for i in range(len(ds)):
            rec = ds[i]
            counts += np.asarray(rec.labels, dtype=np.int64)
            for v in dataset.validate_record(
                rec, manifest, require_labels=not args.allow_unlabeled
            ):
                violations.append((rec.image_id, v))
        print(f"records\t{len(ds)}")
        for name, count in zip(manifest.class_names, counts):
            print(f"{name}\t{count}")
        for image_id, v in violations:
            print(f"violation\t{image_id}\t{v}")
        if violations:
            raise DataError(f"{len(violations)} validation violations")
    return EXIT_OK


def cmd_gen_bags(args) -> int:
    cfg = _resolve_config(args)
    names = cfg.classes or None
    spec = synth.GaussianBagSpec(
        num_classes=len(names) if names else args.num_classes,
        embedding_width=args.embedding_width,
        masks_per_image=args.masks_per_image,
        positives_per_bag=args.positives,
        mean_scale=args.mean_scale,
        noise=args.noise,
        bag_count=args.bags,
        seed=cfg.seed,
        mask_size=args.mask_size,
        image_size=args.image_size,
    )
    task = synth.gen_gaussian_bags(spec, class_names=names)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    task.write(args.out, gt_dir=args.gt_out)
    print(f"wrote {len(task.records)} records to {args.out}")
    return EXIT_OK


def _load_training_inputs(args, cfg):
    with dataset.open_dataset(args.dataset) as ds:
        manifest = ds.manifest
        _check_classes(cfg, manifest)
        records = list(ds)
    return manifest, records


def cmd_train_teacher(args) -> int:
    cfg = _resolve_config(args)
    manifest, records = _load_training_inputs(args, cfg)
    params, log = trainer.train_teacher(
        manifest,
        records,
        cfg.train_config(manifest.num_classes),
        checkpoint_dir=Path(args.out).parent if cfg.checkpoint_every else None,
        config_hash=cfg.hash(),
    )
    _write_weights_with_meta(
        params, args.out, cfg.hash(), cfg.seed, "teacher", len(log.epochs)
    )
    Path(str(args.out) + ".log.tsv").write_text(log.to_tsv(), encoding="utf-8")
    print(f"teacher weights written to {args.out} ({len(log.epochs)} epochs)")
    return EXIT_OK


def cmd_train_student(args) -> int:
    cfg = _resolve_config(args)
    manifest, records = _load_training_inputs(args, cfg)
    teacher = mlp.load_weights(args.teacher)
    params, log = trainer.train_student(
        manifest,
        records,
        teacher,
        cfg.train_config(manifest.num_classes),
        checkpoint_dir=Path(args.out).parent if cfg.checkpoint_every else None,
        config_hash=cfg.hash(),
    )
    _write_weights_with_meta(
        params, args.out, cfg.hash(), cfg.seed, "student", len(log.epochs)
    )
    Path(str(args.out) + ".log.tsv").write_text(log.to_tsv(), encoding="utf-8")
    print(f"student weights written to {args.out} ({len(log.epochs)} epochs)")
    return EXIT_OK


def _infer_one(rec, manifest, params, cfg):
    pmfs = infer.score_masks(params, np.asarray(rec.embeddings, dtype=np.float64))
    candidates = infer.filter_by_confidence(pmfs, cfg.conf_threshold)
    masks = rec.decode_masks(manifest.mask_h, manifest.mask_w)
    kept = infer.nms(
        candidates, masks, cfg.nms_threshold, class_agnostic=cfg.class_agnostic_nms
    )
    sem = infer.assemble_semantic_mask(kept, masks, rec.image_h, rec.image_w)
    upsampled = {
        c.mask_index: infer.upsample_nearest(
            masks[c.mask_index], rec.image_h, rec.image_w
        )
        for c in kept
    }
    return rec.image_id, sem, kept, upsampled


def cmd_infer(args) -> int:
    cfg = _resolve_config(args)
    cfg_hash = cfg.hash()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with dataset.open_dataset(args.dataset) as ds:
        manifest = ds.manifest
        _check_classes(cfg, manifest)
        params = mlp.load_weights(args.weights)
        if params.dims[0] != manifest.E or params.dims[-1] != manifest.num_classes:
            raise DimsMismatch(
                f"weights dims {params.dims} vs dataset E={manifest.E}, "
                f"C={manifest.num_classes}"
            )
        records = list(ds)

    def work(rec):
        return _infer_one(rec, manifest, params, cfg)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(work, records))
    else:
        results = [work(rec) for rec in records]

    # deterministic artifact bytes: write sequentially in record order
    for image_id, sem, kept, upsampled in results:
        write_pgm(out_dir / f"{image_id}.pgm", sem.labels)
        payload = {
            "image_id": image_id,
            "config_hash": cfg_hash,
            "image_h": sem.labels.shape[0],
            "image_w": sem.labels.shape[1],
            "candidates": [
                {
                    "mask_index": c.mask_index,
                    "class_index": c.class_index,
                    "class_name": manifest.class_names[c.class_index],
                    "score": c.score,
                    "mask_rle": [
                        int(r) for r in dataset.rle_encode(upsampled[c.mask_index])
                    ],
                }
                for c in kept
            ],
        }
        (out_dir / f"{image_id}.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
        )
    lines = ["0 background"] + [
        f"{i + 1} {name}" for i, name in enumerate(manifest.class_names)
    ]
    (out_dir / "classes.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {len(results)} semantic masks to {out_dir}")
    return EXIT_OK


def _read_class_names(pred_dir: Path, cfg: RunConfig):
    listing = pred_dir / "classes.txt"
    if listing.exists():
        names = []
        for line in listing.read_text(encoding="utf-8").splitlines():
            idx, _, name = line.partition(" ")
            if idx != "0":
                names.append(name)
        names = tuple(names)
        if cfg.classes and tuple(cfg.classes) != names:
            raise ConfigError(
                f"--classes {cfg.classes} does not match {listing}: {names}"
            )
        return names
    if cfg.classes:
        return tuple(cfg.classes)
    raise ConfigError("class names unavailable: pass --classes or provide classes.txt")


def _load_predictions(pred_dir: Path, image_id: str, pred_grid, hashes):
    """Scored candidate masks for one image, from the sidecar when present."""
    sidecar = pred_dir / f"{image_id}.json"
    if sidecar.exists():
        payload = json.loads(sidecar.read_text(encoding="utf-8"))
        hashes.add(str(payload.get("config_hash", "")))
        h, w = int(payload["image_h"]), int(payload["image_w"])
        out = []
        for cand in payload["candidates"]:
            mask = dataset.rle_decode(np.asarray(cand["mask_rle"]), h, w)
            out.append((int(cand["class_index"]) + 1, float(cand["score"]), mask))
        return out
    # fall back to the label map itself: each component scores 1.0
    return [
        (label, 1.0, mask) for label, mask in metrics.extract_gt_instances(pred_grid)
    ]


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    pred_dir = Path(args.pred)
    gt_dir = Path(args.gt)
    pred_ids = {p.stem for p in pred_dir.glob("*.pgm")}
    gt_ids = {p.stem for p in gt_dir.glob("*.pgm")}
    if pred_ids != gt_ids:
        raise IdSetMismatch(
            f"prediction ids {sorted(pred_ids ^ gt_ids)} not shared by both dirs"
        )
    if not pred_ids:
        raise DataError("no .pgm label maps to evaluate")
    class_names = _read_class_names(pred_dir, cfg)
    num_classes = len(class_names)
    image_ids = sorted(pred_ids)
    hashes: set[str] = set()

    def work(image_id):
        pred = read_pgm(pred_dir / f"{image_id}.pgm")
        gt = read_pgm(gt_dir / f"{image_id}.pgm")
        acc = metrics.accumulate_iou(
            pred, gt, metrics.IouAccumulator(num_classes)
        )
        preds = _load_predictions(pred_dir, image_id, pred, hashes)
        gts = metrics.extract_gt_instances(gt)
        return acc, preds, gts

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            per_image = list(pool.map(work, image_ids))
    else:
        per_image = [work(i) for i in image_ids]

    if len(hashes) > 1 and not args.force:
        raise DataError(
            f"mixed config hashes in prediction sidecars: {sorted(hashes)}; "
            "pass --force to evaluate anyway"
        )

    total = metrics.IouAccumulator(num_classes)
    for acc, _, _ in per_image:
        total = total.merge(acc)
    predictions = {i: p for i, (_, p, _) in zip(image_ids, per_image)}
    gt_instances = {i: g for i, (_, _, g) in zip(image_ids, per_image)}
    per_class_ap, map_value = metrics.map50(predictions, gt_instances, num_classes)
    miou_value = metrics.miou(total, include_background=cfg.miou_include_background)

    ious = metrics.per_class_iou(total)

    def opt(value):
        return None if np.isnan(value) else float(value)

    report = metrics.EvalReport(
        class_names=class_names,
        per_class_iou={
            "background": opt(ious[0]),
            **{name: opt(ious[i + 1]) for i, name in enumerate(class_names)},
        },
        miou=miou_value,
        per_class_ap50={
            name: opt(per_class_ap[i + 1]) for i, name in enumerate(class_names)
        },
        map50=map_value,
        image_count=len(image_ids),
        gt_instance_count=sum(len(g) for g in gt_instances.values()),
        config_hash=sorted(hashes)[0] if hashes else "",
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (out_dir / "report.txt").write_text(report.to_table(), encoding="utf-8")
    print(f"miou={report.miou:.6f} map50={report.map50:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semhead",
        description="Train, run, and score a semantic classifier head over "
        "class-agnostic mask embeddings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", help="print manifest, label histogram, violations")
    p.add_argument("dataset")
    p.add_argument("--allow-unlabeled", action="store_true",
                   help="accept all-zero label vectors (inference datasets)")
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("gen-bags", help="generate a synthetic bag dataset")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.add_argument("--gt-out", dest="gt_out", help="directory for GT label maps")
    p.add_argument("--num-classes", type=int, default=5, dest="num_classes")
    p.add_argument("--bags", type=int, default=100)
    p.add_argument("--masks-per-image", type=int, default=20, dest="masks_per_image")
    p.add_argument("--embedding-width", type=int, default=64, dest="embedding_width")
    p.add_argument("--positives", type=int, default=3)
    p.add_argument("--mean-scale", type=float, default=5.0, dest="mean_scale")
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--mask-size", type=int, default=64, dest="mask_size")
    p.add_argument("--image-size", type=int, default=64, dest="image_size")
    p.set_defaults(fn=cmd_gen_bags)

    p = sub.add_parser("train-teacher", help="train the teacher head (bag loss)")
    _add_config_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_teacher)

    p = sub.add_parser("train-student",
                       help="train the student head (bag + uncertainty loss)")
    _add_config_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--teacher", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train_student)

    p = sub.add_parser("infer", help="emit per-pixel semantic label maps")
    _add_config_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_infer)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    _add_config_flags(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true",
                   help="evaluate despite mixed config hashes")
    p.set_defaults(fn=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
