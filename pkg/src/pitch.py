"""
Frame-level F0 estimation with a normalized autocorrelation tracker.
"""

from __future__ import annotations

from dataclasses import dataclass

import librosa
import numpy as np

from .audio import Waveform
from .config import MelConfig
from .errors import EmptyInputError

F0_MIN_HZ = 50.0
F0_MAX_HZ = 600.0
VOICING_THRESHOLD = 0.45
# Earliest lag whose correlation reaches this share of the best peak wins; this keeps
# the tracker on the true period instead of its multiples.
PEAK_SHARE = 0.9
SILENCE_RMS = 1e-4


@dataclass
class F0Track:
    f0_hz: np.ndarray
    voiced_mask: np.ndarray

    @property
    def voiced_fraction(self) -> float:
        return float(self.voiced_mask.mean()) if len(self.voiced_mask) else 0.0

    @property
    def voiced_f0(self) -> np.ndarray:
        return self.f0_hz[self.voiced_mask]

    def mean_voiced_f0(self) -> float | None:
        voiced = self.voiced_f0
        return float(voiced.mean()) if len(voiced) else None


def estimate_f0(
    wave: Waveform,
    frame: MelConfig,
    *,
    fmin: float = F0_MIN_HZ,
    fmax: float = F0_MAX_HZ,
    threshold: float = VOICING_THRESHOLD,
) -> F0Track:
    """
    Estimate F0 on the same frame grid as the mel spectrogram.

    Each fft_size-sample frame is correlated against itself at every lag in the
    [fmin, fmax] band; correlations are normalized per lag so they lie in [-1, 1].
    The chosen lag is refined with parabolic interpolation, and frames whose best
    correlation stays below `threshold` (or that are silent) are marked unvoiced.
    """
    if len(wave) == 0:
        raise EmptyInputError("cannot estimate F0 of an empty waveform")
    rate = wave.sample_rate
    size = frame.fft_size
    pad = frame.edge_padding
    mode = "reflect" if len(wave) > pad else "constant"
    padded = np.pad(wave.samples.astype(np.float64), (pad, pad), mode=mode)
    if len(padded) < size:
        padded = np.pad(padded, (0, size - len(padded)))
    frames = librosa.util.frame(padded, frame_length=size, hop_length=frame.hop_size, axis=0)
    frames = frames - frames.mean(axis=1, keepdims=True)

    min_lag = max(2, int(np.floor(rate / fmax)))
    max_lag = min(size - 3, int(np.ceil(rate / fmin)))
    correlation = _normalized_autocorrelation(frames, min_lag - 1, max_lag + 1)

    count = frames.shape[0]
    f0 = np.zeros(count, dtype=np.float64)
    voiced = np.zeros(count, dtype=bool)
    rms = np.sqrt(np.mean(frames**2, axis=1))
    for index in range(count):
        if rms[index] <= SILENCE_RMS:
            continue
        lag = _pick_period(correlation[index], min_lag, max_lag, threshold)
        if lag is None:
            continue
        period = lag + _parabolic_offset(correlation[index], lag)
        f0[index] = rate / period
        voiced[index] = fmin <= f0[index] <= fmax
        if not voiced[index]:
            f0[index] = 0.0
    return F0Track(f0_hz=f0, voiced_mask=voiced)


def _normalized_autocorrelation(frames: np.ndarray, first_lag: int, last_lag: int) -> np.ndarray:
    """Return an array indexed by lag (0..last_lag) with per-lag normalized correlation."""
    count, size = frames.shape
    out = np.zeros((count, last_lag + 1), dtype=np.float64)
    energy = np.cumsum(frames**2, axis=1)
    total = energy[:, -1]
    for lag in range(first_lag, last_lag + 1):
        head = frames[:, : size - lag]
        tail = frames[:, lag:]
        numerator = np.einsum("ij,ij->i", head, tail)
        head_energy = energy[:, size - lag - 1]
        tail_energy = total - energy[:, lag - 1]
        denominator = np.sqrt(head_energy * tail_energy)
        out[:, lag] = np.divide(numerator, denominator, out=np.zeros(count), where=denominator > 0)
    return out


def _pick_period(correlation: np.ndarray, min_lag: int, max_lag: int, threshold: float) -> int | None:
    lags = np.arange(min_lag, max_lag + 1)
    values = correlation[lags]
    is_peak = (values >= correlation[lags - 1]) & (values > correlation[lags + 1])
    if not np.any(is_peak):
        return None
    peak_lags = lags[is_peak]
    peak_values = values[is_peak]
    best = float(peak_values.max())
    if best < threshold:
        return None
    return int(peak_lags[np.argmax(peak_values >= PEAK_SHARE * best)])


def _parabolic_offset(correlation: np.ndarray, lag: int) -> float:
    left, centre, right = correlation[lag - 1], correlation[lag], correlation[lag + 1]
    curvature = left - 2.0 * centre + right
    if curvature >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / curvature, -0.5, 0.5))
