"""Dataclass configs and their key = value text format."""

from __future__ import annotations

import ast
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path


@dataclass(frozen=True)
class AVTNetConfig:
    n_mels: int = 128
    n_frames: int = 589
    image_size: int = 224
    audio_filters: int = 64
    audio_kernel: int = 11
    audio_layers: int = 3
    image_filters: int = 128
    image_layers: int = 3
    feature_dim: int = 64
    embed_dim: int = 256
    transformer_heads: int = 4
    transformer_width: int = 64
    transformer_ff: int = 400
    tokenization: str = "modality"  # or "chunked"
    chunk_size: int = 16
    recognizer_dense: tuple[int, int] = (512, 256)
    n_classes: int = 75

    def __post_init__(self):
        sizes = [self.n_mels, self.n_frames, self.image_size, self.audio_filters, self.audio_kernel,
                 self.audio_layers, self.image_filters, self.image_layers, self.feature_dim,
                 self.embed_dim, self.transformer_heads, self.transformer_width, self.transformer_ff,
                 self.chunk_size, self.n_classes, *self.recognizer_dense]
        if any(int(s) <= 0 for s in sizes):
            raise ValueError("all layer sizes must be positive")
        if self.transformer_width % self.transformer_heads:
            raise ValueError("transformer_width must be divisible by transformer_heads")
        if self.tokenization not in ("modality", "chunked"):
            raise ValueError(f"unknown tokenization {self.tokenization!r}")

    @classmethod
    def toy(cls, **overrides) -> "AVTNetConfig":
        """Small shapes for tests and CPU smoke runs."""
        base = dict(n_frames=64, image_size=64, image_filters=16, n_classes=8)
        base.update(overrides)
        return cls(**base)


@dataclass(frozen=True)
class TrainConfig:
    phase1_epochs: int = 50
    phase2_epochs: int = 25
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.99
    margin: float = 0.2
    seed: int = 0
    toy_scale: bool = False
    stratified: bool = True
    samples_per_class: int = 4
    checkpoint_every: int = 10

    def __post_init__(self):
        if self.batch_size < 4:
            raise ValueError("batch_size must be >= 4 for mining")
        if self.phase1_epochs < 1 or self.phase2_epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 8
    samples_per_subject: int = 20
    test_fraction: float = 0.2
    noise: float = 0.5
    # per-modality multipliers on noise; >1 makes a modality less informative
    audio_noise: float = 1.0
    visible_noise: float = 1.0
    thermal_noise: float = 1.0


@dataclass
class RunConfig:
    model: AVTNetConfig = field(default_factory=AVTNetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)


def _coerce(value: str):
    try:
        return ast.literal_eval(value)
    except (ValueError, SyntaxError):
        return value


def dumps(cfg: RunConfig) -> str:
    lines = []
    for section in ("model", "train", "synth"):
        for k, v in asdict(getattr(cfg, section)).items():
            lines.append(f"{section}.{k} = {v!r}")
    return "\n".join(lines) + "\n"


def loads(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``section.key = value`` lines over ``base`` (defaults if None)."""
    cfg = base or RunConfig()
    updates: dict[str, dict] = {"model": {}, "train": {}, "synth": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'section.key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        section, _, name = key.partition(".")
        if section not in updates:
            raise ValueError(f"line {lineno}: unknown section {section!r}")
        known = {f.name for f in fields(getattr(cfg, section))}
        if name not in known:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        val = _coerce(value)
        if isinstance(val, list):
            val = tuple(val)
        updates[section][name] = val
    return RunConfig(
        model=replace(cfg.model, **updates["model"]),
        train=replace(cfg.train, **updates["train"]),
        synth=replace(cfg.synth, **updates["synth"]),
    )


def load(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    return loads(Path(path).read_text(), base)


def save(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(dumps(cfg))
