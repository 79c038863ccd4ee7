from __future__ import annotations

from collections import Counter

import numpy as np
import pandas as pd
import pytest
import torch

from src.config import AugmentConfig
from src.errors import ManifestError
from src.data import MelStore, TripletSampler, sample_triplet_ids
from src.manifest import DatasetManifest, load_manifest


def _manifest(speakers: int, per_speaker: int) -> DatasetManifest:
    rows = [
        {"utterance_id": f"s{s}_u{u}", "speaker_id": f"s{s:02d}", "path": f"s{s}/u{u}.wav", "split": "train"}
        for s in range(speakers)
        for u in range(per_speaker)
    ]
    return DatasetManifest(pd.DataFrame(rows))


def test_targets_are_two_distinct_utterances_of_the_target_speaker() -> None:
    manifest = _manifest(3, 2)
    rng = np.random.default_rng(0)

    for _ in range(10_000):
        ids = sample_triplet_ids(manifest, rng)
        assert ids.target_first != ids.target_second
        assert manifest.frame.at[ids.target_first, "speaker_id"] == ids.target_speaker
        assert manifest.frame.at[ids.target_second, "speaker_id"] == ids.target_speaker


def test_same_seed_gives_the_same_triplet_sequence() -> None:
    manifest = _manifest(2, 2)

    rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)

    assert [sample_triplet_ids(manifest, rng_a) for _ in range(50)] == [
        sample_triplet_ids(manifest, rng_b) for _ in range(50)
    ]


def test_target_speakers_are_drawn_uniformly() -> None:
    manifest = _manifest(10, 3)
    rng = np.random.default_rng(1)

    counts = Counter(sample_triplet_ids(manifest, rng).target_speaker for _ in range(10_000))

    assert len(counts) == 10
    assert all(abs(count - 1000) <= 100 for count in counts.values())


def test_sampler_rejects_speakers_with_one_utterance(tiny_mel_cfg) -> None:
    manifest = DatasetManifest(
        pd.DataFrame(
            [
                {"utterance_id": "a", "speaker_id": "p1", "path": "a.wav", "split": "train"},
                {"utterance_id": "b", "speaker_id": "p1", "path": "b.wav", "split": "train"},
                {"utterance_id": "c", "speaker_id": "p2", "path": "c.wav", "split": "train"},
            ]
        )
    )

    with pytest.raises(ManifestError):
        TripletSampler(manifest, tiny_mel_cfg, AugmentConfig(), np.random.default_rng(0))


def test_batches_have_training_shapes_and_labels(cached_manifest, tiny_mel_cfg) -> None:
    _, manifest_path = cached_manifest
    manifest = load_manifest(manifest_path)
    sampler = TripletSampler(manifest, tiny_mel_cfg, AugmentConfig(), np.random.default_rng(0))

    batch = sampler.sample_batch(3)

    for mel in (batch.x_s, batch.x_t1, batch.x_t2):
        assert mel.shape == (3, 1, 16, 32)
        assert mel.dtype == torch.float32
    assert batch.y_s.dtype == torch.long
    assert set(batch.y_t.tolist()) <= {0, 1}


def test_deterministic_sampler_crops_from_frame_zero_without_augmentation(cached_manifest, tiny_mel_cfg) -> None:
    _, manifest_path = cached_manifest
    manifest = load_manifest(manifest_path)
    sampler = TripletSampler(manifest, tiny_mel_cfg, AugmentConfig(), np.random.default_rng(0), deterministic=True)

    prepared = sampler.prepare(0)

    full = sampler.store[0].values
    expected = sampler.normalizer.normalize(full[:, :32])
    np.testing.assert_array_equal(prepared.values, expected)


def test_store_falls_back_to_audio_when_no_cache(cached_manifest, tiny_mel_cfg) -> None:
    manifest, manifest_path = cached_manifest
    without_cache = DatasetManifest(manifest.frame.drop(columns=["mel_path"]), root=manifest_path.parent)

    from_audio = MelStore(without_cache, tiny_mel_cfg)[0]
    from_cache = MelStore(manifest, tiny_mel_cfg)[0]

    np.testing.assert_allclose(from_audio.values, from_cache.values, atol=1e-5)


def test_labelled_set_covers_every_utterance_once(cached_manifest, tiny_mel_cfg) -> None:
    _, manifest_path = cached_manifest
    manifest = load_manifest(manifest_path)
    sampler = TripletSampler(manifest, tiny_mel_cfg, AugmentConfig(), np.random.default_rng(0))

    mels, labels = sampler.labelled_set()

    assert mels.shape == (len(manifest), 1, 16, 32)
    assert sorted(Counter(labels.tolist()).values()) == [3, 3]
    assert sampler.deterministic is False


def test_explicit_speaker_table_controls_labels(cached_manifest, tiny_mel_cfg) -> None:
    _, manifest_path = cached_manifest
    manifest = load_manifest(manifest_path)
    sampler = TripletSampler(
        manifest, tiny_mel_cfg, AugmentConfig(), np.random.default_rng(0), speakers=["spk01", "spk00"]
    )

    assert sampler.label(0) == 1
