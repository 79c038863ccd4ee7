"""
Log-mel analysis and fixed-width framing.

Frames follow the HiFi-GAN convention: the waveform is reflect-padded by
(fft_size - hop_size) / 2 samples on both sides and analysed without centering, so the
frame count is 1 + (len + 2 * pad - fft_size) // hop_size and a mel of W frames
corresponds to exactly W * hop_size samples of audio.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import librosa
import numpy as np
import torch

from .audio import Waveform
from .config import MelConfig
from .errors import DataError, LengthError, ParameterError


@dataclass
class MelSpectrogram:
    """n_mels x W log-mel grid, row 0 is the lowest frequency band."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DataError(f"mel spectrogram must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("mel spectrogram contains non-finite values")

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


@lru_cache(maxsize=8)
def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """
    Slaney-normalized triangular filters of shape (n_mels, fft_size // 2 + 1).

    The lowest and highest triangles are held flat out to the band edges so the DC
    and Nyquist bins still map into a filter.
    """
    weights = librosa.filters.mel(
        sr=cfg.sample_rate,
        n_fft=cfg.fft_size,
        n_mels=cfg.n_mels,
        fmin=cfg.fmin,
        fmax=cfg.nyquist,
        dtype=np.float32,
    )
    first_peak = int(np.argmax(weights[0]))
    weights[0, :first_peak] = weights[0, first_peak]
    last_peak = int(np.argmax(weights[-1]))
    weights[-1, last_peak:] = weights[-1, last_peak]
    weights.setflags(write=False)
    return weights


def mel_center_frequencies(cfg: MelConfig) -> np.ndarray:
    return librosa.mel_frequencies(n_mels=cfg.n_mels + 2, fmin=cfg.fmin, fmax=cfg.nyquist)[1:-1]


def linear_spectrogram(samples: np.ndarray, cfg: MelConfig) -> np.ndarray:
    pad = cfg.edge_padding
    padded = np.pad(samples.astype(np.float32), (pad, pad), mode="reflect")
    stft = librosa.stft(
        padded,
        n_fft=cfg.fft_size,
        hop_length=cfg.hop_size,
        win_length=cfg.fft_size,
        window="hann",
        center=False,
    )
    return np.abs(stft) ** cfg.power


def mel_spectrogram(wave: Waveform, cfg: MelConfig) -> MelSpectrogram:
    """Compute log(max(mel, log_floor)) with n_mels rows."""
    if wave.sample_rate != cfg.sample_rate:
        raise DataError(f"waveform is {wave.sample_rate} Hz but the mel config expects {cfg.sample_rate} Hz")
    if len(wave) < cfg.fft_size:
        raise LengthError(f"waveform has {len(wave)} samples, at least fft_size={cfg.fft_size} are required")
    mel = mel_filterbank(cfg) @ linear_spectrogram(wave.samples, cfg)
    return MelSpectrogram(np.log(np.maximum(mel, cfg.log_floor)))


def expected_width(num_samples: int, cfg: MelConfig) -> int:
    return 1 + (num_samples + 2 * cfg.edge_padding - cfg.fft_size) // cfg.hop_size


def fit_width(
    mel: MelSpectrogram,
    target: int,
    *,
    rng: np.random.Generator | None = None,
    pad_value: float = MelConfig().pad_value,
) -> MelSpectrogram:
    """
    Crop or right-pad to exactly `target` frames.

    With an rng the crop onset is uniform over every valid start (training); without
    one the crop starts at frame 0 (deterministic mode).
    """
    if target <= 0:
        raise ParameterError(f"target width must be positive, got {target}")
    values = mel.values
    if mel.width > target:
        onset = int(rng.integers(0, mel.width - target + 1)) if rng is not None else 0
        return MelSpectrogram(values[:, onset:onset + target].copy())
    if mel.width < target:
        padded = np.full((mel.rows, target), pad_value, dtype=np.float32)
        padded[:, :mel.width] = values
        return MelSpectrogram(padded)
    return MelSpectrogram(values.copy())


def column_norm(mel: MelSpectrogram | np.ndarray | torch.Tensor) -> np.ndarray | torch.Tensor:
    """Absolute column sums: out[..., m] = sum over rows of |mel[..., row, m]|."""
    values = mel.values if isinstance(mel, MelSpectrogram) else mel
    if isinstance(values, torch.Tensor):
        return values.abs().sum(dim=-2)
    return np.abs(np.asarray(values)).sum(axis=-2)


@dataclass(frozen=True)
class MelNormalizer:
    """Affine map between stored log-mels and the range the networks train on."""

    mean: float
    std: float

    @classmethod
    def from_config(cls, cfg: MelConfig) -> MelNormalizer:
        return cls(mean=cfg.norm_mean, std=cfg.norm_std)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return ((np.asarray(values, dtype=np.float32) - self.mean) / self.std).astype(np.float32)

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float32) * self.std + self.mean).astype(np.float32)
