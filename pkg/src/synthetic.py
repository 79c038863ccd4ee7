"""
Synthetic speakers for tests and desk-scale experiments.

Each speaker is a harmonic source with its own F0 and spectral envelope. Utterances add
slow pitch drift, vibrato and a syllable-rate amplitude envelope so no two clips of a
speaker are identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .audio import Waveform, write_wav

NUM_HARMONICS = 12


@dataclass(frozen=True)
class SyntheticSpeaker:
    speaker_id: str
    f0_hz: float
    harmonic_weights: tuple[float, ...]
    gender: str


def make_speakers(count: int, rng: np.random.Generator, *, identical: bool = False) -> list[SyntheticSpeaker]:
    """
    Build `count` speakers with spread-out F0s and random harmonic envelopes.

    With `identical=True` every speaker shares one F0 and envelope, so no classifier can
    tell them apart.
    """
    shared_weights = tuple(_envelope(rng))
    speakers = []
    for index in range(count):
        f0 = 160.0 if identical else float(np.interp(index, [0, max(count - 1, 1)], [100.0, 280.0]))
        weights = shared_weights if identical else tuple(_envelope(rng))
        speakers.append(
            SyntheticSpeaker(
                speaker_id=f"spk{index:02d}",
                f0_hz=f0,
                harmonic_weights=weights,
                gender="M" if f0 < 165.0 else "F",
            )
        )
    return speakers


def _envelope(rng: np.random.Generator) -> np.ndarray:
    decay = rng.uniform(0.15, 0.6)
    formant = rng.integers(2, NUM_HARMONICS)
    harmonics = np.arange(1, NUM_HARMONICS + 1)
    weights = np.exp(-decay * (harmonics - 1)) + 0.8 * np.exp(-0.5 * ((harmonics - formant) / 1.5) ** 2)
    return weights / weights.sum()


def synthesize_utterance(
    speaker: SyntheticSpeaker,
    duration_s: float,
    sample_rate: int,
    rng: np.random.Generator,
) -> Waveform:
    count = int(round(duration_s * sample_rate))
    t = np.arange(count) / sample_rate
    drift = 1.0 + rng.uniform(-0.04, 0.04) + 0.02 * np.sin(2 * np.pi * rng.uniform(0.2, 0.8) * t)
    vibrato = 1.0 + 0.01 * np.sin(2 * np.pi * rng.uniform(4.0, 6.0) * t)
    f0 = speaker.f0_hz * drift * vibrato
    phase = 2 * np.pi * np.cumsum(f0) / sample_rate
    signal = np.zeros(count)
    for harmonic, weight in enumerate(speaker.harmonic_weights, start=1):
        audible = harmonic * f0 < 0.45 * sample_rate
        signal += weight * np.sin(harmonic * phase + rng.uniform(0, 2 * np.pi)) * audible
    syllables = 0.6 + 0.4 * np.abs(np.sin(2 * np.pi * rng.uniform(2.0, 4.0) * t + rng.uniform(0, np.pi)))
    signal = signal * syllables + 0.002 * rng.standard_normal(count)
    signal = 0.5 * signal / max(np.max(np.abs(signal)), 1e-9)
    return Waveform(signal.astype(np.float32), sample_rate)


def write_synthetic_corpus(
    root: str | Path,
    *,
    speakers: int = 4,
    utterances: int = 10,
    duration_s: float = 1.0,
    sample_rate: int = 22050,
    seed: int = 0,
    identical: bool = False,
) -> Path:
    """Write `<root>/<speaker>/<utt>.wav` plus `<root>/speakers.csv` with genders."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    roster = make_speakers(speakers, rng, identical=identical)
    for speaker in roster:
        for index in range(utterances):
            wave = synthesize_utterance(speaker, duration_s, sample_rate, rng)
            write_wav(wave, root / speaker.speaker_id / f"utt{index:03d}.wav")
    pd.DataFrame(
        {"speaker_id": [s.speaker_id for s in roster], "gender": [s.gender for s in roster]}
    ).to_csv(root / "speakers.csv", index=False)
    return root
