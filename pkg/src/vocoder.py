"""
Mel-to-waveform inversion.

Griffin-Lim is the built-in vocoder. Neural vocoders plug in through the same
callable interface and are referenced as `package.module:factory` strings.
"""

from __future__ import annotations

import importlib
from dataclasses import dataclass
from typing import Any, Callable, Protocol

import librosa
import numpy as np

from .audio import Waveform
from .config import MelConfig
from .errors import ConfigError, ParameterError
from .features import MelSpectrogram, mel_filterbank

# Cells this close to the log floor are treated as exact silence.
SILENCE_TOLERANCE = 1e-4


class Vocoder(Protocol):
    def __call__(self, mel: MelSpectrogram, cfg: MelConfig) -> Waveform: ...


def griffin_lim_invert(
    mel: MelSpectrogram,
    cfg: MelConfig,
    iterations: int,
    *,
    seed: int = 0,
    momentum: float = 0.99,
) -> Waveform:
    """
    Invert a log-mel to audio of exactly width * hop_size samples.

    The mel magnitudes are mapped back to a linear spectrogram with non-negative least
    squares against the filterbank, then phase is recovered with fast Griffin-Lim
    starting from a seeded random phase.
    """
    if iterations < 1:
        raise ParameterError(f"iterations must be >= 1, got {iterations}")
    values = mel.values.astype(np.float64)
    mel_magnitude = np.exp(values)
    mel_magnitude[values <= cfg.silence_value + SILENCE_TOLERANCE] = 0.0
    num_samples = mel.width * cfg.hop_size
    if not np.any(mel_magnitude):
        return Waveform(np.zeros(num_samples, dtype=np.float32), cfg.sample_rate)

    filterbank = np.array(mel_filterbank(cfg), dtype=np.float64)
    linear = librosa.util.nnls(filterbank, mel_magnitude)
    if cfg.power != 1.0:
        linear = np.power(linear, 1.0 / cfg.power)
    audio = librosa.griffinlim(
        linear,
        n_iter=iterations,
        hop_length=cfg.hop_size,
        win_length=cfg.fft_size,
        n_fft=cfg.fft_size,
        window="hann",
        center=False,
        momentum=momentum,
        init="random",
        random_state=seed,
    )
    pad = cfg.edge_padding
    audio = audio[pad:pad + num_samples]
    if len(audio) < num_samples:
        audio = np.pad(audio, (0, num_samples - len(audio)))
    return Waveform(np.clip(audio, -1.0, 1.0), cfg.sample_rate)


@dataclass
class GriffinLimVocoder:
    iterations: int = 60
    seed: int = 0

    def __call__(self, mel: MelSpectrogram, cfg: MelConfig) -> Waveform:
        return griffin_lim_invert(mel, cfg, self.iterations, seed=self.seed)


VOCODERS: dict[str, Callable[..., Vocoder]] = {"griffin-lim": GriffinLimVocoder}


def load_vocoder(name: str, **options: Any) -> Vocoder:
    """Return a built-in vocoder by name or import a `module:factory` plugin."""
    if name in VOCODERS:
        return VOCODERS[name](**options)
    module_name, separator, attribute = name.partition(":")
    if not separator or not module_name or not attribute:
        raise ConfigError(f"unknown vocoder {name!r}; use one of {sorted(VOCODERS)} or 'module:factory'")
    try:
        factory = getattr(importlib.import_module(module_name), attribute)
    except (ImportError, AttributeError) as exc:
        raise ConfigError(f"cannot load vocoder plugin {name!r}: {exc}") from exc
    return factory(**options)
