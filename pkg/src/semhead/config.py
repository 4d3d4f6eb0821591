"""Run configuration: flat ``key = value`` files, flag overrides, canonical
hashing.

Grammar: one ``key = value`` pair per line; blank lines and ``#`` comments
ignored; unknown keys rejected. Command-line flags override file values.
The config hash is sha256 over the canonical sorted serialization, so any
behavioral setting change changes every downstream artifact's hash.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace

from . import distill, trainer
from .errors import ConfigError


@dataclass(frozen=True)
class RunConfig:
    classes: tuple[str, ...] = ()
    a: float = 8.0
    entropy_threshold: float = 0.0   # 0 = auto: ln(num_classes)/2
    conf_threshold: float = 0.7
    nms_threshold: float = 0.5
    seed: int = 0
    epochs: int = 100
    lr: float = 0.001
    batch_size: int = 64
    lambda1: float = 1.0
    lambda2: float = 0.15
    threads: int = 1
    holdout_fraction: float = 0.1
    checkpoint_every: int = 0
    hidden_dims: tuple[int, ...] = trainer.DEFAULT_HIDDEN_DIMS
    early_stop_patience: int = 15
    class_agnostic_nms: bool = False
    miou_include_background: bool = True

    def check(self) -> None:
        if self.a < 1:
            raise ConfigError("a must be >= 1")
        if not 0.0 < self.conf_threshold < 1.0:
            raise ConfigError("conf_threshold must lie in (0, 1)")
        if not 0.0 < self.nms_threshold < 1.0:
            raise ConfigError("nms_threshold must lie in (0, 1)")
        if self.entropy_threshold < 0.0:
            raise ConfigError("entropy_threshold must be >= 0 (0 = auto)")
        if self.classes and (
            len(set(self.classes)) != len(self.classes)
            or any(not c for c in self.classes)
        ):
            raise ConfigError("classes must be unique and non-empty")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("lambda1 and lambda2 must be non-negative")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0.0 <= self.holdout_fraction < 0.5:
            raise ConfigError("holdout_fraction must lie in [0, 0.5)")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden_dims must be positive")
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")

    def resolved_entropy_threshold(self, num_classes: int) -> float:
        if self.entropy_threshold > 0.0:
            return self.entropy_threshold
        return distill.default_entropy_threshold(num_classes)

    def loss_weights(self, num_classes: int) -> distill.LossWeights:
        w = distill.LossWeights(
            self.lambda1, self.lambda2, self.resolved_entropy_threshold(num_classes)
        )
        w.check(num_classes)
        return w

    def train_config(self, num_classes: int) -> trainer.TrainConfig:
        return trainer.TrainConfig(
            batch_size=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            seed=self.seed,
            a=self.a,
            weights=self.loss_weights(num_classes),
            holdout_fraction=self.holdout_fraction,
            checkpoint_every=self.checkpoint_every,
            hidden_dims=self.hidden_dims,
            early_stop_patience=self.early_stop_patience,
        )

    def canonical_text(self) -> str:
        # threads is a scheduling knob that never changes artifact content,
        # so it stays out of the hashed canonical form
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if f.name == "threads":
                continue
            lines.append(f"{f.name} = {_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


_PARSERS = {
    "classes": lambda s: tuple(x.strip() for x in s.split(",") if x.strip()),
    "a": float,
    "entropy_threshold": float,
    "conf_threshold": float,
    "nms_threshold": float,
    "seed": int,
    "epochs": int,
    "lr": float,
    "batch_size": int,
    "lambda1": float,
    "lambda2": float,
    "threads": int,
    "holdout_fraction": float,
    "checkpoint_every": int,
    "hidden_dims": lambda s: tuple(int(x) for x in s.split(",") if x.strip()),
    "early_stop_patience": int,
    "class_agnostic_nms": lambda s: _parse_bool(s),
    "miou_include_background": lambda s: _parse_bool(s),
}


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "1", "yes"):
        return True
    if v in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    updates = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            updates[key] = _PARSERS[key](value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    cfg = replace(cfg, **updates)
    cfg.check()
    return cfg


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config_text(f.read(), base)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Apply non-None flag values on top of cfg; flags win over the file."""
    updates = {k: v for k, v in overrides.items() if v is not None}
    for key in updates:
        if key not in _PARSERS:
            raise ConfigError(f"unknown config field {key!r}")
    cfg = replace(cfg, **updates)
    cfg.check()
    return cfg
