from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np
import pytest

from src.audio import Waveform
from src.config import DataConfig, MelConfig, ModelConfig, RunConfig, TrainConfig
from src.conversion_service import preprocess_corpus
from src.manifest import DatasetManifest
from src.synthetic import write_synthetic_corpus

TINY_MEL = MelConfig(sample_rate=8000, fft_size=256, hop_size=64, n_mels=16, target_width=32)
TINY_MODEL = ModelConfig(
    n_mels=16,
    frames=32,
    num_subbands=4,
    num_speakers=2,
    content_channels=32,
    base_channels=8,
    style_dim=32,
    style_backbone="resnet18",
    max_shift_rows=1.0,
)
TINY_TRAIN = TrainConfig(
    epochs=1,
    batch_size=2,
    steps_per_epoch=2,
    checkpoint_every=1000,
    log_every=1,
    pretrain_epochs=1,
)


@pytest.fixture
def tiny_mel_cfg() -> MelConfig:
    return TINY_MEL


@pytest.fixture
def tiny_model_cfg() -> ModelConfig:
    return TINY_MODEL


@pytest.fixture
def tiny_run_cfg() -> RunConfig:
    return RunConfig(mel=TINY_MEL, model=TINY_MODEL, train=TINY_TRAIN, data=DataConfig(workers=1))


@pytest.fixture
def tiny_config_file(tmp_path: Path) -> Path:
    """The tiny run config as a JSON file, for the command-line entrypoint."""
    payload = {
        "mel": {"sample_rate": 8000, "fft_size": 256, "hop_size": 64, "n_mels": 16, "target_width": 32},
        "model": {
            "n_mels": 16,
            "frames": 32,
            "content_channels": 32,
            "base_channels": 8,
            "style_dim": 32,
            "style_backbone": "resnet18",
            "max_shift_rows": 1.0,
        },
        "train": {"epochs": 1, "batch_size": 2, "steps_per_epoch": 2, "pretrain_epochs": 1, "log_every": 1},
        "data": {"workers": 1, "test_per_speaker": 1},
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


@pytest.fixture
def make_tone() -> Callable[..., Waveform]:
    def build(frequency: float, duration_s: float = 1.0, sample_rate: int = 22050, amplitude: float = 0.5) -> Waveform:
        t = np.arange(int(round(duration_s * sample_rate))) / sample_rate
        return Waveform((amplitude * np.sin(2 * np.pi * frequency * t)).astype(np.float32), sample_rate)

    return build


@pytest.fixture
def synthetic_corpus(tmp_path: Path) -> Path:
    """Two speakers with four 0.6 s clips each, at the tiny sample rate."""
    return write_synthetic_corpus(tmp_path / "corpus", speakers=2, utterances=4, duration_s=0.6, sample_rate=8000, seed=0)


@pytest.fixture
def cached_manifest(tmp_path: Path, synthetic_corpus: Path) -> tuple[DatasetManifest, Path]:
    """The synthetic corpus preprocessed with one held-out test clip per speaker."""
    return preprocess_corpus(
        synthetic_corpus,
        tmp_path / "cache",
        TINY_MEL,
        DataConfig(test_per_speaker=1, workers=1),
        seed=0,
    )
