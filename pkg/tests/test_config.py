from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import pytest

from src.config import (
    LossWeights,
    MelConfig,
    ModelConfig,
    RunConfig,
    cache_dir,
    load_run_config,
    runs_dir,
)
from src.errors import ConfigError


def test_defaults_match_the_reference_setup() -> None:
    config = load_run_config()

    assert (config.mel.sample_rate, config.mel.fft_size, config.mel.hop_size) == (22050, 1024, 256)
    assert (config.model.n_mels, config.model.frames, config.model.num_subbands) == (80, 224, 4)
    assert (config.model.content_rows, config.model.content_frames) == (20, 112)
    assert config.model.backbone_channels == 2048
    assert config.train.learning_rate == pytest.approx(1e-4)


def test_default_loss_weights_sum_to_24_5() -> None:
    assert sum(asdict(LossWeights()).values()) == pytest.approx(24.5)


def test_overrides_accept_section_paths_and_unique_bare_names() -> None:
    config = load_run_config(None, ["train.batch_size=4", "epochs=3", "adv=1.5", "model.style_backbone=resnet18"])

    assert config.train.batch_size == 4
    assert config.train.epochs == 3
    assert config.train.weights.adv == pytest.approx(1.5)
    assert config.model.style_backbone == "resnet18"
    assert config.model.backbone_channels == 512


def test_override_tuple_fields_are_parsed_from_json() -> None:
    config = load_run_config(None, ['data.unseen_speakers=["p225", "p226"]'])

    assert config.data.unseen_speakers == ("p225", "p226")


def test_ambiguous_override_lists_the_candidates() -> None:
    with pytest.raises(ConfigError, match="ambiguous") as excinfo:
        load_run_config(None, ["n_mels=40"])

    assert "mel.n_mels" in str(excinfo.value)
    assert "model.n_mels" in str(excinfo.value)


@pytest.mark.parametrize("override", ["train.nonexistent=1", "missing_equals_sign", "=3"])
def test_bad_overrides_are_rejected(override: str) -> None:
    with pytest.raises(ConfigError):
        load_run_config(None, [override])


def test_config_file_sections_are_merged_over_defaults(tmp_path: Path) -> None:
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"train": {"epochs": 7}, "data": {"workers": 2}}), encoding="utf-8")

    config = load_run_config(path, ["train.epochs=9"])

    assert config.train.epochs == 9
    assert config.data.workers == 2
    assert config.mel == MelConfig()


def test_unknown_config_file_section_is_rejected(tmp_path: Path) -> None:
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"optimizer": {"lr": 1}}), encoding="utf-8")

    with pytest.raises(ConfigError, match="optimizer"):
        load_run_config(path)


def test_invalid_json_config_is_a_config_error(tmp_path: Path) -> None:
    path = tmp_path / "config.json"
    path.write_text("{not json", encoding="utf-8")

    with pytest.raises(ConfigError, match="not valid JSON"):
        load_run_config(path)


def test_mel_and_model_geometry_must_agree() -> None:
    with pytest.raises(ConfigError, match="must match"):
        load_run_config(None, ["mel.n_mels=40"])


@pytest.mark.parametrize(
    "kwargs",
    [
        {"num_subbands": 3},
        {"num_subbands": 0},
        {"max_shift_rows": 20.0},
        {"dropout_p": 1.0},
        {"style_backbone": "vgg16"},
        {"upsample_block": 6},
    ],
)
def test_model_config_validates_its_fields(kwargs: dict[str, object]) -> None:
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)


@pytest.mark.parametrize("subbands", [1, 2, 4, 5])
def test_supported_subband_counts_divide_80_rows(subbands: int) -> None:
    assert ModelConfig(num_subbands=subbands).n_mels // subbands * subbands == 80


def test_mel_config_rejects_hop_larger_than_fft() -> None:
    with pytest.raises(ConfigError):
        MelConfig(fft_size=256, hop_size=512)


def test_negative_loss_weight_is_rejected() -> None:
    with pytest.raises(ConfigError, match="rec"):
        LossWeights(rec=-1.0)


def test_with_speakers_replaces_only_the_speaker_count() -> None:
    config = RunConfig().with_speakers(7)

    assert config.model.num_speakers == 7
    assert config.model.style_dim == RunConfig().model.style_dim


def test_storage_roots_follow_environment(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> None:
    monkeypatch.setenv("SGVC_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.setenv("SGVC_RUNS_DIR", str(tmp_path / "runs"))

    assert cache_dir() == tmp_path / "cache"
    assert runs_dir() == tmp_path / "runs"


def test_mel_silence_value_is_log_floor() -> None:
    cfg = MelConfig(log_floor=1e-5)

    assert cfg.silence_value == pytest.approx(-11.512925)
    assert cfg.pad_value == cfg.silence_value
    assert MelConfig(pad_with_zero=True).pad_value == 0.0
