"""Teacher/student training loops: batching, holdout split, early stopping,
checkpointing, and tab-separated epoch logs.

Teacher trains on the bag loss alone; the student adds the weighted
uncertainty term against the frozen teacher's bad sets. Everything is
deterministic for a fixed (seed, config, dataset) in single-threaded mode.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import distill, mil, mlp
from .dataset import DatasetManifest
from .errors import BadParam, DimsMismatch, EmptyDataset, EmptyLabel

DEFAULT_HIDDEN_DIMS = (512, 256, 128)


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 0.001
    epochs: int = 100
    seed: int = 0
    a: float = 8.0
    weights: distill.LossWeights = field(default_factory=distill.LossWeights)
    holdout_fraction: float = 0.1
    checkpoint_every: int = 0
    hidden_dims: tuple[int, ...] = DEFAULT_HIDDEN_DIMS
    early_stop_patience: int = 15

    def check(self) -> None:
        if self.batch_size < 1:
            raise BadParam("batch_size must be >= 1")
        if self.lr <= 0:
            raise BadParam("lr must be positive")
        if not 0.0 <= self.holdout_fraction < 0.5:
            raise BadParam("holdout_fraction must lie in [0, 0.5)")
        if self.epochs < 0:
            raise BadParam("epochs must be >= 0")


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    holdout_accuracy: float
    wall_time: float


@dataclass
class TrainLog:
    seed: int
    config_hash: str
    epochs: list[EpochStats] = field(default_factory=list)

    def to_tsv(self) -> str:
        """One epoch per line: epoch, train loss, holdout accuracy, seconds."""
        lines = [f"# seed={self.seed}\tconfig_hash={self.config_hash}"]
        lines.append("epoch\ttrain_loss\tholdout_accuracy\twall_time_s")
        for e in self.epochs:
            lines.append(
                f"{e.epoch}\t{e.train_loss:.10g}\t{e.holdout_accuracy:.6f}"
                f"\t{e.wall_time:.3f}"
            )
        return "\n".join(lines) + "\n"


def batch_iter(n_records: int, batch_size: int, seed: int, epoch: int):
    """Index batches of an epoch-seeded permutation; last batch may be short.

    The permutation RNG is seeded with seed XOR epoch, so the same seed
    produces a fresh order every epoch.
    """
    rng = np.random.default_rng(seed ^ epoch)
    perm = rng.permutation(n_records)
    for start in range(0, n_records, batch_size):
        yield perm[start : start + batch_size]


def materialize(records, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """Stack record embeddings/labels into (N,d,E) and (N,C) float64 arrays."""
    embeddings = np.stack(
        [np.asarray(r.embeddings, dtype=np.float64) for r in records]
    )
    labels = np.stack([np.asarray(r.labels, dtype=np.float64) for r in records])
    if labels.shape[1] != num_classes:
        raise DimsMismatch(
            f"records carry {labels.shape[1]} classes, manifest says {num_classes}"
        )
    return embeddings, labels


def split_holdout(n: int, fraction: float, seed: int):
    """Deterministic train/holdout index split (holdout drawn last)."""
    perm = np.random.default_rng(seed).permutation(n)
    n_hold = int(n * fraction)
    if n_hold == 0:
        return perm, np.zeros(0, dtype=np.int64)
    return perm[:-n_hold], perm[-n_hold:]


def bag_accuracy(params: mlp.MlpParams, x: np.ndarray, y: np.ndarray, k: int) -> float:
    """Fraction of bags whose top pooled class is among the present labels."""
    if len(x) == 0:
        return 0.0
    n, d, e = x.shape
    logits, _ = mlp.forward(params, x.reshape(n * d, e))
    logits = logits.reshape(n, d, -1)
    hits = 0
    for i in range(n):
        pooled = mil.kmax_pool(logits[i], k).pooled
        if y[i, int(np.argmax(pooled))] > 0:
            hits += 1
    return hits / n


def _checkpoint(params, directory, epoch, config_hash):
    if directory is None:
        return
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"checkpoint_{epoch:04d}.weights"
    mlp.save_weights(params, path)
    (directory / f"checkpoint_{epoch:04d}.weights.cfghash").write_text(
        config_hash + "\n", encoding="utf-8"
    )


def _training_loop(
    manifest: DatasetManifest,
    records,
    cfg: TrainConfig,
    image_grad_fn,
    checkpoint_dir,
    config_hash: str,
) -> tuple[mlp.MlpParams, TrainLog]:
    """Shared loop. image_grad_fn(train_row, logits_bag, labels_bag, k) gives
    each image's (loss, dlogits); batch averaging happens here.

    With a holdout split the returned params are the best-holdout-accuracy
    snapshot and training stops early after early_stop_patience epochs
    without improvement; without one, the final params are returned.
    """
    cfg.check()
    if len(records) == 0:
        raise EmptyDataset("no records to train on")
    num_classes = manifest.num_classes
    x_all, y_all = materialize(records, num_classes)
    if (y_all.sum(axis=1) == 0).any():
        raise EmptyLabel("training records must carry at least one hot label")
    train_idx, hold_idx = split_holdout(len(records), cfg.holdout_fraction, cfg.seed)
    x_tr, y_tr = x_all[train_idx], y_all[train_idx]
    x_ho, y_ho = x_all[hold_idx], y_all[hold_idx]
    k = mil.compute_k(manifest.d, cfg.a)

    dims = (manifest.E, *cfg.hidden_dims, num_classes)
    params = mlp.init_params(cfg.seed, dims)
    state = mlp.AdamState.zeros_like(params)
    log = TrainLog(seed=cfg.seed, config_hash=config_hash)

    best_acc = -1.0
    best_params = None
    stale = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        losses = []
        for batch in batch_iter(len(x_tr), cfg.batch_size, cfg.seed, epoch):
            xb = x_tr[batch]
            yb = y_tr[batch]
            n, d, e = xb.shape
            logits, cache = mlp.forward(params, xb.reshape(n * d, e))
            logits = logits.reshape(n, d, num_classes)
            dlogits = np.zeros_like(logits)
            batch_loss = 0.0
            for pos, row in enumerate(batch):
                loss_i, grad_i = image_grad_fn(row, logits[pos], yb[pos], k)
                batch_loss += loss_i
                dlogits[pos] = grad_i
            batch_loss /= n
            dlogits /= n
            grads = mlp.backward(params, cache, dlogits.reshape(n * d, num_classes))
            mlp.adam_step(params, grads, state, cfg.lr)
            losses.append(batch_loss)

        acc = bag_accuracy(params, x_ho, y_ho, k) if len(x_ho) else float("nan")
        log.epochs.append(
            EpochStats(epoch, float(np.mean(losses)), acc, time.perf_counter() - t0)
        )
        if cfg.checkpoint_every and (epoch + 1) % cfg.checkpoint_every == 0:
            _checkpoint(params, checkpoint_dir, epoch, config_hash)
        if len(x_ho):
            if acc > best_acc:
                best_acc = acc
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break

    if best_params is not None:
        params = best_params
    return params, log


def train_teacher(
    manifest: DatasetManifest,
    records,
    cfg: TrainConfig,
    checkpoint_dir=None,
    config_hash: str = "",
) -> tuple[mlp.MlpParams, TrainLog]:
    """Train the teacher head on the bag loss alone."""

    def teacher_grad(_row, logits, labels, k):
        return mil.mil_loss_grad(logits, labels, k)

    return _training_loop(
        manifest, records, cfg, teacher_grad, checkpoint_dir, config_hash
    )


def train_student(
    manifest: DatasetManifest,
    records,
    teacher: mlp.MlpParams,
    cfg: TrainConfig,
    checkpoint_dir=None,
    config_hash: str = "",
) -> tuple[mlp.MlpParams, TrainLog]:
    """Train a fresh student on the weighted bag + uncertainty objective.

    The teacher stays frozen: its per-record bad sets are computed once up
    front and its parameter hash is asserted unchanged afterwards. The
    student initializes from the config seed, not from the teacher.
    """
    if teacher.dims[0] != manifest.E or teacher.dims[-1] != manifest.num_classes:
        raise DimsMismatch(
            f"teacher dims {teacher.dims} vs dataset E={manifest.E}, "
            f"C={manifest.num_classes}"
        )
    weights = cfg.weights
    if weights.entropy_threshold <= 0.0:
        weights = distill.LossWeights(
            weights.mil_weight,
            weights.uncertainty_weight,
            distill.default_entropy_threshold(manifest.num_classes),
        )
    weights.check(manifest.num_classes)
    teacher_hash_before = teacher.content_hash()

    # frozen-teacher bad sets, precomputed in training-split row order
    x_all, y_all = materialize(records, manifest.num_classes)
    train_idx, _ = split_holdout(len(records), cfg.holdout_fraction, cfg.seed)
    bad_sets = []
    for i in train_idx:
        stats = distill.teacher_stats(teacher, x_all[i])
        bad_sets.append(distill.bad_set(stats, y_all[i], weights.entropy_threshold))

    def student_grad(row, logits, labels, k):
        mil_pair = mil.mil_loss_grad(logits, labels, k)
        unc_pair = distill.uncertainty_loss(logits, bad_sets[row])
        return distill.combined_loss(mil_pair, unc_pair, weights)

    result = _training_loop(
        manifest, records, cfg, student_grad, checkpoint_dir, config_hash
    )
    if teacher.content_hash() != teacher_hash_before:
        raise AssertionError("teacher parameters changed during student training")
    return result
