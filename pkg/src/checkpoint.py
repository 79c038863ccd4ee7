"""
Checkpoint directories.

Layout:

  <dir>/metadata.json                 schema version, model/mel config, speakers, step
  <dir>/<subnetwork>.sgva             one tensor archive per saved sub-network
  <dir>/optimizer-<name>.sgva         optimizer moments, keyed "<param index>.<field>"

Directories are written under a temporary name and renamed into place.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import torch

from .config import MelConfig, ModelConfig
from .errors import SchemaError, StorageError
from .mel_cache import ARCHIVE_SUFFIX, read_tensor_archive, write_tensor_archive
from .networks import SubbandGAN

SCHEMA_VERSION = 1
METADATA_NAME = "metadata.json"
SUBNETWORKS = ("content_encoder", "pitch_shift", "style_encoder", "decoder", "discriminator")


@dataclass
class Checkpoint:
    path: Path
    models: SubbandGAN
    model_cfg: ModelConfig
    mel_cfg: MelConfig
    speakers: list[str]
    step: int
    parts: tuple[str, ...] = SUBNETWORKS
    extra: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    path: str | Path,
    models: SubbandGAN,
    *,
    step: int,
    speakers: Sequence[str],
    mel_cfg: MelConfig,
    optimizers: Mapping[str, torch.optim.Optimizer] | None = None,
    parts: Sequence[str] = SUBNETWORKS,
    extra: Mapping[str, Any] | None = None,
) -> Path:
    path = Path(path)
    unknown = sorted(set(parts) - set(SUBNETWORKS))
    if unknown:
        raise ValueError(f"unknown sub-network(s): {unknown}")
    if len(speakers) != models.cfg.num_speakers:
        raise SchemaError(
            f"speaker table has {len(speakers)} entries but model.num_speakers={models.cfg.num_speakers}"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{path.name}-", dir=path.parent))
    try:
        for name in parts:
            write_tensor_archive(getattr(models, name).state_dict(), staging / f"{name}{ARCHIVE_SUFFIX}")
        optimizer_groups: dict[str, Any] = {}
        for name, optimizer in (optimizers or {}).items():
            state = optimizer.state_dict()
            optimizer_groups[name] = state["param_groups"]
            tensors = {
                f"{index}.{key}": value
                for index, entries in state["state"].items()
                for key, value in entries.items()
                if isinstance(value, torch.Tensor)
            }
            write_tensor_archive(tensors, staging / f"optimizer-{name}{ARCHIVE_SUFFIX}")
        metadata = {
            "schema_version": SCHEMA_VERSION,
            "model": asdict(models.cfg),
            "mel": asdict(mel_cfg),
            "speakers": list(speakers),
            "step": int(step),
            "parts": list(parts),
            "optimizers": optimizer_groups,
            "extra": dict(extra or {}),
        }
        (staging / METADATA_NAME).write_text(json.dumps(metadata, indent=2, sort_keys=True), encoding="utf-8")
        if path.exists():
            shutil.rmtree(path)
        os.replace(staging, path)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    return path


def read_metadata(path: str | Path) -> dict[str, Any]:
    metadata_path = Path(path) / METADATA_NAME
    if not metadata_path.is_file():
        raise StorageError(f"{path} is not a checkpoint directory (no {METADATA_NAME})")
    try:
        metadata = json.loads(metadata_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{metadata_path}: invalid JSON ({exc})") from exc
    version = metadata.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"schema_version: checkpoint has {version!r}, expected {SCHEMA_VERSION}")
    return metadata


def _config_from_metadata(cls: type, payload: dict[str, Any], section: str) -> Any:
    known = {item.name for item in fields(cls)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise SchemaError(f"{section}: unknown field(s) {unknown}")
    return cls(**payload)


def check_compatible(saved: ModelConfig, expected: ModelConfig) -> None:
    """Raise SchemaError naming the first model field that differs."""
    for item in fields(ModelConfig):
        ours, theirs = getattr(expected, item.name), getattr(saved, item.name)
        if ours != theirs:
            raise SchemaError(f"model.{item.name}: checkpoint has {theirs!r}, expected {ours!r}")


def load_checkpoint(
    path: str | Path,
    *,
    models: SubbandGAN | None = None,
    optimizers: Mapping[str, torch.optim.Optimizer] | None = None,
    expected_model: ModelConfig | None = None,
    device: str | torch.device = "cpu",
) -> Checkpoint:
    """
    Restore a checkpoint, building fresh networks from its config unless `models` is given.

    Sub-networks missing from the checkpoint keep their current weights. Tensors are
    cast back to the dtype of the parameter or buffer they restore.
    """
    path = Path(path)
    metadata = read_metadata(path)
    model_cfg = _config_from_metadata(ModelConfig, metadata["model"], "model")
    mel_cfg = _config_from_metadata(MelConfig, metadata["mel"], "mel")
    if expected_model is not None:
        check_compatible(model_cfg, expected_model)
    if models is None:
        models = SubbandGAN(model_cfg)
    else:
        check_compatible(model_cfg, models.cfg)
    models.to(device)

    parts = tuple(metadata.get("parts", SUBNETWORKS))
    for name in parts:
        module = getattr(models, name)
        archive = read_tensor_archive(path / f"{name}{ARCHIVE_SUFFIX}")
        module.load_state_dict(_restore(archive, module.state_dict(), f"{name}"))

    for name, optimizer in (optimizers or {}).items():
        if name not in metadata.get("optimizers", {}):
            raise SchemaError(f"optimizers.{name}: not present in checkpoint {path}")
        archive = read_tensor_archive(path / f"optimizer-{name}{ARCHIVE_SUFFIX}")
        state: dict[int, dict[str, torch.Tensor]] = {}
        for key, array in archive.items():
            index, _, field_name = key.partition(".")
            state.setdefault(int(index), {})[field_name] = _to_tensor(array, torch.float32)
        try:
            optimizer.load_state_dict({"state": state, "param_groups": metadata["optimizers"][name]})
        except (ValueError, KeyError) as exc:
            raise SchemaError(f"optimizers.{name}: {exc}") from exc

    return Checkpoint(
        path=path,
        models=models,
        model_cfg=model_cfg,
        mel_cfg=mel_cfg,
        speakers=list(metadata["speakers"]),
        step=int(metadata["step"]),
        parts=parts,
        extra=dict(metadata.get("extra", {})),
    )


def _to_tensor(array: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(array)).to(dtype)


def _restore(archive: dict[str, np.ndarray], template: dict[str, torch.Tensor], prefix: str) -> dict[str, torch.Tensor]:
    missing = sorted(set(template) - set(archive))
    unexpected = sorted(set(archive) - set(template))
    if missing or unexpected:
        raise SchemaError(f"{prefix}: missing tensors {missing[:5]}, unexpected tensors {unexpected[:5]}")
    restored: dict[str, torch.Tensor] = {}
    for name, reference in template.items():
        array = archive[name]
        if tuple(array.shape) != tuple(reference.shape):
            raise SchemaError(f"{prefix}.{name}: shape {tuple(array.shape)} != expected {tuple(reference.shape)}")
        restored[name] = _to_tensor(array, reference.dtype).to(reference.device)
    return restored
