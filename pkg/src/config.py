"""
Configuration dataclasses and the JSON config loader.

Each section validates its own invariants when constructed so a bad override fails
before any audio is read or any network is allocated.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError

STYLE_BACKBONES = {"resnet18": 512, "resnet34": 512, "resnet50": 2048}


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 22050
    fft_size: int = 1024
    hop_size: int = 256
    n_mels: int = 80
    target_width: int = 224
    log_floor: float = 1e-5
    power: float = 1.0
    fmin: float = 0.0
    fmax: float | None = None
    norm_mean: float = -4.0
    norm_std: float = 4.0
    pad_with_zero: bool = False

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise ConfigError("mel.sample_rate must be positive")
        if self.hop_size <= 0 or self.fft_size < self.hop_size:
            raise ConfigError("mel.fft_size must be >= mel.hop_size > 0")
        if self.n_mels <= 0 or self.target_width <= 0:
            raise ConfigError("mel.n_mels and mel.target_width must be positive")
        if self.log_floor <= 0:
            raise ConfigError("mel.log_floor must be positive")
        if self.norm_std <= 0:
            raise ConfigError("mel.norm_std must be positive")

    @property
    def silence_value(self) -> float:
        """Log-mel value of a cell with no energy."""
        return math.log(self.log_floor)

    @property
    def pad_value(self) -> float:
        return 0.0 if self.pad_with_zero else self.silence_value

    @property
    def edge_padding(self) -> int:
        """Reflective padding applied on both sides of the waveform before framing."""
        return (self.fft_size - self.hop_size) // 2

    @property
    def nyquist(self) -> float:
        return self.fmax if self.fmax is not None else self.sample_rate / 2.0


@dataclass(frozen=True)
class AugmentConfig:
    enabled: bool = True
    time_warp_prob: float = 0.5
    time_warp_max_distance: int = 20
    freq_mask_prob: float = 0.5
    freq_mask_max_width: int = 15
    mask_value: float = 0.0

    def __post_init__(self) -> None:
        for name in ("time_warp_prob", "freq_mask_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"augment.{name} must be within [0, 1]")
        if self.time_warp_max_distance < 0 or self.freq_mask_max_width < 0:
            raise ConfigError("augment distances and widths must be non-negative")


@dataclass(frozen=True)
class ModelConfig:
    num_subbands: int = 4
    num_speakers: int = 2
    style_dim: int = 256
    content_channels: int = 256
    base_channels: int = 64
    max_shift_rows: float = 4.0
    dropout_p: float = 0.1
    style_backbone: str = "resnet50"
    use_pitch_shift: bool = True
    upsample_block: int = 3
    n_mels: int = 80
    frames: int = 224

    def __post_init__(self) -> None:
        if not 1 <= self.num_subbands <= self.n_mels or self.n_mels % self.num_subbands:
            raise ConfigError(
                f"model.num_subbands={self.num_subbands} must divide model.n_mels={self.n_mels}"
            )
        if self.n_mels % 4 or self.frames % 2:
            raise ConfigError("model.n_mels must be divisible by 4 and model.frames must be even")
        if self.num_speakers < 1:
            raise ConfigError("model.num_speakers must be at least 1")
        if not 0 <= self.max_shift_rows < self.content_rows:
            raise ConfigError(f"model.max_shift_rows must be within [0, {self.content_rows})")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("model.dropout_p must be within [0, 1)")
        if self.style_backbone not in STYLE_BACKBONES:
            raise ConfigError(
                f"model.style_backbone must be one of {sorted(STYLE_BACKBONES)}, got {self.style_backbone!r}"
            )
        if not 0 <= self.upsample_block < 6:
            raise ConfigError("model.upsample_block must index one of the six decoder blocks")
        for name in ("style_dim", "content_channels", "base_channels"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"model.{name} must be positive")

    @property
    def content_rows(self) -> int:
        return self.n_mels // 4

    @property
    def content_frames(self) -> int:
        return self.frames // 2

    @property
    def backbone_channels(self) -> int:
        return STYLE_BACKBONES[self.style_backbone]


@dataclass(frozen=True)
class LossWeights:
    adv: float = 2.0
    id: float = 0.5
    style: float = 5.0
    content: float = 10.0
    ds: float = 1.0
    norm: float = 1.0
    rec: float = 5.0

    def __post_init__(self) -> None:
        negative = [name for name, value in asdict(self).items() if value < 0]
        if negative:
            raise ConfigError(f"loss weights must be non-negative: {', '.join(negative)}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_every: int = 1000
    pretrain_epochs: int = 20
    steps_per_epoch: int = 0
    non_saturating: bool = False
    device: str = "cpu"
    deterministic: bool = False
    log_every: int = 10

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ConfigError("train.batch_size must be at least 2")
        if self.epochs < 1:
            raise ConfigError("train.epochs must be at least 1")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("train.learning_rate and train.weight_decay must be non-negative")
        if self.checkpoint_every < 1 or self.log_every < 1:
            raise ConfigError("train.checkpoint_every and train.log_every must be positive")
        if self.pretrain_epochs < 0 or self.steps_per_epoch < 0:
            raise ConfigError("train.pretrain_epochs and train.steps_per_epoch must be non-negative")


@dataclass(frozen=True)
class DataConfig:
    test_per_speaker: int = 0
    unseen_speakers: tuple[str, ...] = ()
    min_duration_s: float = 0.0
    workers: int = 4

    def __post_init__(self) -> None:
        if self.test_per_speaker < 0 or self.min_duration_s < 0 or self.workers < 1:
            raise ConfigError("data.test_per_speaker/min_duration_s must be >= 0 and data.workers >= 1")


@dataclass(frozen=True)
class RunConfig:
    mel: MelConfig = field(default_factory=MelConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self) -> None:
        if self.mel.n_mels != self.model.n_mels or self.mel.target_width != self.model.frames:
            raise ConfigError(
                "model.n_mels/model.frames must match mel.n_mels/mel.target_width "
                f"({self.model.n_mels}x{self.model.frames} vs {self.mel.n_mels}x{self.mel.target_width})"
            )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def with_speakers(self, num_speakers: int) -> RunConfig:
        return replace(self, model=replace(self.model, num_speakers=num_speakers))


def cache_dir() -> Path:
    return Path(os.getenv("SGVC_CACHE_DIR", "./mel_cache"))


def runs_dir() -> Path:
    return Path(os.getenv("SGVC_RUNS_DIR", "./runs"))


def load_run_config(path: str | Path | None = None, overrides: list[str] | None = None) -> RunConfig:
    """Read a JSON config file (optional) and apply `key=value` overrides on top."""
    payload: dict[str, Any] = {}
    if path is not None:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
    merged = _merge(asdict(RunConfig()), payload, prefix="")
    for override in overrides or []:
        key, separator, raw_value = override.partition("=")
        if not separator or not key.strip():
            raise ConfigError(f"override {override!r} must look like key=value")
        _apply_override(merged, key.strip(), _parse_value(raw_value.strip()))
    return run_config_from_dict(merged)


def run_config_from_dict(payload: dict[str, Any]) -> RunConfig:
    try:
        return _build(RunConfig, payload, "")
    except TypeError as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc


def _build(cls: type, payload: dict[str, Any], prefix: str) -> Any:
    """Instantiate a (possibly nested) config dataclass from plain JSON data."""
    known = {item.name: item for item in fields(cls)}
    unknown = sorted(set(payload) - set(known))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(prefix + name for name in unknown)}")
    kwargs: dict[str, Any] = {}
    defaults = cls()
    for name, value in payload.items():
        default_value = getattr(defaults, name)
        if is_dataclass(default_value):
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix}{name} must be an object")
            kwargs[name] = _build(type(default_value), value, f"{prefix}{name}.")
        elif isinstance(default_value, tuple):
            kwargs[name] = tuple(value) if isinstance(value, (list, tuple)) else (value,)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _merge(base: dict[str, Any], update: dict[str, Any], prefix: str) -> dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {prefix}{key}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{prefix}{key} must be an object")
            merged[key] = _merge(base[key], value, f"{prefix}{key}.")
        else:
            merged[key] = value
    return merged


def _leaf_paths(payload: dict[str, Any], prefix: tuple[str, ...] = ()) -> list[tuple[str, ...]]:
    paths: list[tuple[str, ...]] = []
    for key, value in payload.items():
        if isinstance(value, dict):
            paths.extend(_leaf_paths(value, prefix + (key,)))
        else:
            paths.append(prefix + (key,))
    return paths


def _apply_override(payload: dict[str, Any], key: str, value: Any) -> None:
    """Resolve `train.epochs`, `weights.adv` or a bare unique name like `epochs`."""
    wanted = tuple(key.split("."))
    matches = [path for path in _leaf_paths(payload) if path[-len(wanted):] == wanted]
    if not matches:
        raise ConfigError(f"unknown config key: {key}")
    if len(matches) > 1:
        options = ", ".join(".".join(path) for path in matches)
        raise ConfigError(f"ambiguous config key {key!r}; use one of: {options}")
    target = payload
    for part in matches[0][:-1]:
        target = target[part]
    target[matches[0][-1]] = value


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw
