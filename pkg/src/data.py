"""
Training examples drawn from a manifest: triplets for the generator, labelled mels for
style pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

from .audio import load_and_resample
from .augment import random_augment
from .config import AugmentConfig, MelConfig
from .features import MelNormalizer, MelSpectrogram, fit_width, mel_spectrogram
from .manifest import DatasetManifest
from .mel_cache import read_mel_cache


class MelStore:
    """Full-length log-mels by manifest row, read from the cache (or audio) once."""

    def __init__(self, manifest: DatasetManifest, mel_cfg: MelConfig) -> None:
        self.manifest = manifest
        self.mel_cfg = mel_cfg
        self._mels: dict[int, MelSpectrogram] = {}

    def __getitem__(self, index: int) -> MelSpectrogram:
        if index not in self._mels:
            cached = self.manifest.mel_path(index)
            if cached is not None and cached.is_file():
                mel = read_mel_cache(cached)
            else:
                wave = load_and_resample(self.manifest.audio_path(index), self.mel_cfg.sample_rate)
                mel = mel_spectrogram(wave, self.mel_cfg)
            self._mels[index] = mel
        return self._mels[index]


class TripletIds(NamedTuple):
    source: int
    target_speaker: str
    target_first: int
    target_second: int


@dataclass
class Triplet:
    x_s: MelSpectrogram
    y_s: int
    x_t1: MelSpectrogram
    x_t2: MelSpectrogram
    y_t: int
    ids: TripletIds


@dataclass
class TripletBatch:
    x_s: torch.Tensor
    y_s: torch.Tensor
    x_t1: torch.Tensor
    x_t2: torch.Tensor
    y_t: torch.Tensor

    def to(self, device: str | torch.device) -> TripletBatch:
        return TripletBatch(*(getattr(self, name).to(device) for name in ("x_s", "y_s", "x_t1", "x_t2", "y_t")))


def sample_triplet_ids(manifest: DatasetManifest, rng: np.random.Generator) -> TripletIds:
    """
    Uniform source utterance, uniform target speaker among the other speakers (the
    source speaker when it is the only one) and two distinct target utterances.
    """
    by_speaker = manifest.utterances_by_speaker()
    speakers = sorted(by_speaker)
    source = int(rng.integers(0, len(manifest)))
    source_speaker = manifest.frame.at[source, "speaker_id"]
    candidates = [speaker for speaker in speakers if speaker != source_speaker] or speakers
    target_speaker = candidates[int(rng.integers(0, len(candidates)))]
    first, second = rng.choice(by_speaker[target_speaker], size=2, replace=False)
    return TripletIds(source, target_speaker, int(first), int(second))


class TripletSampler:
    """Draws augmented, width-fitted, normalized triplets from one manifest."""

    def __init__(
        self,
        manifest: DatasetManifest,
        mel_cfg: MelConfig,
        augment_cfg: AugmentConfig,
        rng: np.random.Generator,
        *,
        speakers: list[str] | None = None,
        store: MelStore | None = None,
        deterministic: bool = False,
    ) -> None:
        self.manifest = manifest.require_pairs()
        self.mel_cfg = mel_cfg
        self.augment_cfg = augment_cfg
        self.rng = rng
        self.speakers = speakers if speakers is not None else manifest.speakers
        self.store = store or MelStore(manifest, mel_cfg)
        self.deterministic = deterministic
        self.normalizer = MelNormalizer.from_config(mel_cfg)

    def prepare(self, index: int, *, augment: bool = True) -> MelSpectrogram:
        mel = fit_width(
            self.store[index],
            self.mel_cfg.target_width,
            rng=None if self.deterministic else self.rng,
            pad_value=self.mel_cfg.pad_value,
        )
        mel = MelSpectrogram(self.normalizer.normalize(mel.values))
        if augment and not self.deterministic:
            mel = random_augment(mel, self.augment_cfg, self.rng)
        return mel

    def label(self, index: int) -> int:
        return self.manifest.label_of(self.manifest.frame.at[index, "speaker_id"], self.speakers)

    def sample(self) -> Triplet:
        ids = sample_triplet_ids(self.manifest, self.rng)
        return Triplet(
            x_s=self.prepare(ids.source),
            y_s=self.label(ids.source),
            x_t1=self.prepare(ids.target_first),
            x_t2=self.prepare(ids.target_second),
            y_t=self.manifest.label_of(ids.target_speaker, self.speakers),
            ids=ids,
        )

    def sample_batch(self, batch_size: int) -> TripletBatch:
        triplets = [self.sample() for _ in range(batch_size)]
        return TripletBatch(
            x_s=stack_mels([t.x_s for t in triplets]),
            y_s=torch.tensor([t.y_s for t in triplets], dtype=torch.long),
            x_t1=stack_mels([t.x_t1 for t in triplets]),
            x_t2=stack_mels([t.x_t2 for t in triplets]),
            y_t=torch.tensor([t.y_t for t in triplets], dtype=torch.long),
        )

    def sample_labelled_batch(self, batch_size: int) -> tuple[torch.Tensor, torch.Tensor]:
        indices = self.rng.integers(0, len(self.manifest), size=batch_size)
        mels = stack_mels([self.prepare(int(index)) for index in indices])
        labels = torch.tensor([self.label(int(index)) for index in indices], dtype=torch.long)
        return mels, labels

    def labelled_set(self) -> tuple[torch.Tensor, torch.Tensor]:
        """Every utterance once, frame-0 crop and no augmentation."""
        previous, self.deterministic = self.deterministic, True
        try:
            indices = range(len(self.manifest))
            mels = stack_mels([self.prepare(index, augment=False) for index in indices])
            labels = torch.tensor([self.label(index) for index in indices], dtype=torch.long)
        finally:
            self.deterministic = previous
        return mels, labels


def stack_mels(mels: list[MelSpectrogram]) -> torch.Tensor:
    return torch.from_numpy(np.stack([mel.values for mel in mels])).unsqueeze(1)
