from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import torch

from src.audio import Waveform, write_wav
from src.checkpoint import load_checkpoint, save_checkpoint
from src.config import DataConfig
from src.conversion_service import (
    Converter,
    _dedupe_name,
    assign_splits,
    evaluate_checkpoint,
    invert_cached_mel,
    preprocess_corpus,
)
from src.errors import EmptyInputError, LabelError, ManifestError
from src.evaluator import SpeakerClassifier, read_external_manifest
from src.mel_cache import read_mel_cache
from src.networks import SubbandGAN
from src.vocoder import GriffinLimVocoder


def test_dedupe_name_appends_a_counter_before_the_suffix() -> None:
    assert _dedupe_name("clip.wav", set()) == "clip.wav"
    assert _dedupe_name("clip.wav", {"clip.wav"}) == "clip-1.wav"
    assert _dedupe_name("clip.wav", {"clip.wav", "clip-1.wav"}) == "clip-2.wav"


def test_preprocess_writes_relative_manifest_and_mel_blobs(cached_manifest, tmp_path: Path, tiny_mel_cfg) -> None:
    manifest, manifest_path = cached_manifest

    assert manifest_path == tmp_path / "cache" / "manifest.csv"
    frame = pd.read_csv(manifest_path, dtype=str, keep_default_na=False)
    assert len(frame) == 8
    assert not any(Path(p).is_absolute() for p in frame["path"])
    assert not any(Path(p).is_absolute() for p in frame["mel_path"])
    assert frame.groupby("speaker_id")["split"].apply(lambda s: (s == "test").sum()).tolist() == [1, 1]
    assert manifest.genders() == {"spk00": "M", "spk01": "F"}

    mel = read_mel_cache(manifest.mel_path(0))
    assert mel.rows == tiny_mel_cfg.n_mels
    assert mel.width == int(0.6 * tiny_mel_cfg.sample_rate) // tiny_mel_cfg.hop_size
    assert manifest.audio_path(0).is_file()


def test_preprocess_skips_clips_below_the_minimum_duration(synthetic_corpus: Path, tmp_path: Path, tiny_mel_cfg) -> None:
    write_wav(Waveform(np.full(800, 0.1, dtype=np.float32), 8000), synthetic_corpus / "spk00" / "short.wav")

    manifest, _ = preprocess_corpus(
        synthetic_corpus, tmp_path / "cache", tiny_mel_cfg, DataConfig(min_duration_s=0.3, workers=1)
    )

    assert len(manifest) == 8
    assert "spk00_short" not in set(manifest.frame["utterance_id"])


def test_preprocess_keeps_the_split_column_of_a_listed_manifest(
    synthetic_corpus: Path, tmp_path: Path, tiny_mel_cfg
) -> None:
    listing = pd.DataFrame(
        [
            {"utterance_id": f"a{i}", "speaker_id": "a", "path": f"spk00/utt{i:03d}.wav", "split": split}
            for i, split in enumerate(["train", "train", "test", "unseen"])
        ]
    )
    listing_path = synthetic_corpus / "listing.csv"
    listing.to_csv(listing_path, index=False)

    manifest, _ = preprocess_corpus(listing_path, tmp_path / "cache", tiny_mel_cfg, DataConfig(test_per_speaker=3, workers=1))

    assert manifest.frame["split"].tolist() == ["train", "train", "test", "unseen"]
    assert manifest.audio_path(3).resolve() == (synthetic_corpus / "spk00" / "utt003.wav").resolve()


def test_preprocess_reports_missing_or_empty_corpora(tmp_path: Path, tiny_mel_cfg) -> None:
    with pytest.raises(FileNotFoundError):
        preprocess_corpus(tmp_path / "missing", tmp_path / "cache", tiny_mel_cfg, DataConfig(workers=1))
    (tmp_path / "empty" / "spk").mkdir(parents=True)
    with pytest.raises(ManifestError):
        preprocess_corpus(tmp_path / "empty", tmp_path / "cache", tiny_mel_cfg, DataConfig(workers=1))


def test_assign_splits_leaves_two_training_clips_and_routes_unseen_speakers() -> None:
    frame = pd.DataFrame({"speaker_id": ["a", "a", "a", "b", "b", "c", "c", "c"]})
    cfg = DataConfig(test_per_speaker=5, unseen_speakers=("c",))

    splits = pd.Series(assign_splits(frame, cfg, np.random.default_rng(0)), index=frame.index)

    assert splits[frame["speaker_id"] == "a"].value_counts().to_dict() == {"train": 2, "test": 1}
    assert splits[frame["speaker_id"] == "b"].tolist() == ["train", "train"]
    assert splits[frame["speaker_id"] == "c"].tolist() == ["unseen"] * 3


@pytest.fixture
def converter(tmp_path: Path, tiny_model_cfg, tiny_mel_cfg) -> Converter:
    torch.manual_seed(0)
    path = save_checkpoint(
        tmp_path / "checkpoint", SubbandGAN(tiny_model_cfg), step=3, speakers=["spk00", "spk01"], mel_cfg=tiny_mel_cfg
    )
    return Converter(load_checkpoint(path), GriffinLimVocoder(iterations=4))


def test_conversion_and_reconstruction_produce_fixed_length_audio(converter: Converter, tmp_path: Path, make_tone) -> None:
    cfg = converter.mel_cfg
    source = converter.load(write_wav(make_tone(180.0, duration_s=0.6, sample_rate=22050), tmp_path / "source.wav"))
    target = make_tone(260.0, duration_s=0.4, sample_rate=8000)

    converted = converter.convert(source, converter.style_from_wav(target))
    rebuilt = converter.reconstruct(target)

    assert source.sample_rate == cfg.sample_rate
    assert len(converted) == cfg.target_width * cfg.hop_size
    assert len(rebuilt) == cfg.target_width * cfg.hop_size
    assert np.all(np.isfinite(converted.samples))


def test_speaker_style_is_the_mean_over_enrolled_utterances(converter: Converter, cached_manifest) -> None:
    manifest, _ = cached_manifest
    rows = manifest.utterances_by_speaker()["spk01"]
    expected = torch.stack([converter.style_from_wav(converter.load(manifest.audio_path(i))) for i in rows]).mean(dim=0)

    style = converter.style_from_speaker("spk01", manifest)

    assert style.shape == (1, converter.models.cfg.style_dim)
    assert torch.allclose(style, expected, atol=1e-6)


def test_speaker_style_rejects_unknown_or_absent_speakers(converter: Converter, cached_manifest) -> None:
    manifest, _ = cached_manifest

    with pytest.raises(LabelError):
        converter.style_from_speaker("spk99", manifest)
    with pytest.raises(EmptyInputError):
        converter.style_from_speaker("spk01", manifest.subset("unseen"))


def test_invert_cached_mel_returns_width_times_hop_samples(cached_manifest, tiny_mel_cfg) -> None:
    manifest, _ = cached_manifest
    mel = read_mel_cache(manifest.mel_path(0))

    wave = invert_cached_mel(manifest.mel_path(0), tiny_mel_cfg, GriffinLimVocoder(iterations=4))

    assert wave.sample_rate == tiny_mel_cfg.sample_rate
    assert len(wave) == mel.width * tiny_mel_cfg.hop_size


def test_evaluate_checkpoint_writes_reports_and_converted_audio(
    converter: Converter, cached_manifest, tmp_path: Path
) -> None:
    manifest, _ = cached_manifest
    classifier = SpeakerClassifier(models=converter.models, speakers=converter.speakers, mel_cfg=converter.mel_cfg)

    report, paths = evaluate_checkpoint(
        converter, manifest, tmp_path / "eval", pairs=3, seed=0, classifier=classifier
    )

    assert report.record_count == 3
    assert 0.0 <= report.cls <= 1.0
    assert set(report.cls_by_type) <= {"M2F", "F2M"}
    assert {"json", "text", "xlsx", "external_manifest"} <= set(paths)
    assert all(path.is_file() for path in paths.values())
    summary = json.loads(paths["json"].read_text(encoding="utf-8"))["summary"]
    assert summary["records"] == 3
    records = read_external_manifest(paths["external_manifest"])
    assert len(records) == 3
    assert all(record.converted_wave_path.is_file() for record in records)
    assert all(record.target_speaker != record.source_id.split("_")[0] for record in records)
