"""
Waveform loading, resampling and writing.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
import soundfile as sf
from scipy.signal import resample_poly

from .errors import DataError, EmptyInputError


@dataclass
class Waveform:
    """Mono float32 samples in [-1, 1] with their sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise DataError("waveform contains non-finite samples")

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate


def load_and_resample(path: str | Path, target_rate: int) -> Waveform:
    """
    Decode a PCM WAV file, average its channels to mono and resample to target_rate.

    soundfile decodes 8/16/24-bit integer and 32-bit float WAV data to float32, so the
    rest of the pipeline never sees integer sample formats.
    """
    path = Path(path)
    try:
        data, rate = sf.read(str(path), dtype="float32", always_2d=True)
    except RuntimeError as exc:
        raise OSError(f"cannot decode audio file {path}: {exc}") from exc
    if data.shape[0] == 0:
        raise EmptyInputError(f"audio file {path} contains no samples")
    mono = data.mean(axis=1) if data.shape[1] > 1 else data[:, 0]
    return resample(Waveform(mono, int(rate)), target_rate)


def resample(wave: Waveform, target_rate: int) -> Waveform:
    """Polyphase resampling; the identity rate returns the samples untouched."""
    if wave.sample_rate == target_rate:
        return Waveform(wave.samples.copy(), target_rate)
    divisor = gcd(int(wave.sample_rate), int(target_rate))
    up = target_rate // divisor
    down = wave.sample_rate // divisor
    resampled = resample_poly(wave.samples.astype(np.float64), up, down)
    return Waveform(np.clip(resampled, -1.0, 1.0).astype(np.float32), target_rate)


def write_wav(wave: Waveform, path: str | Path) -> Path:
    """Write 16-bit PCM, peak-normalizing only when samples leave [-1, 1]."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples = wave.samples
    peak = float(np.max(np.abs(samples))) if len(samples) else 0.0
    if peak > 1.0:
        samples = samples / peak
    sf.write(str(path), samples, wave.sample_rate, subtype="PCM_16")
    return path
