"""
SpecAugment-style time warping and frequency masking on mel spectrograms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .config import AugmentConfig
from .errors import ParameterError
from .features import MelSpectrogram

AugmentMode = Literal["time_warp", "freq_mask"]


@dataclass(frozen=True)
class AugmentParams:
    """
    Parameters for one augmentation call.

    `band_start`/`band_width` and `warp_anchor`/`warp_distance` pin the random draws,
    which is how callers and tests request an exact mask or warp.
    """

    max_mask_width: int = 15
    max_warp_distance: int = 20
    mask_value: float = 0.0
    band_start: int | None = None
    band_width: int | None = None
    warp_anchor: int | None = None
    warp_distance: int | None = None


def augment(
    mel: MelSpectrogram,
    mode: AugmentMode,
    params: AugmentParams,
    rng: np.random.Generator,
) -> MelSpectrogram:
    """Apply one augmentation; the output always keeps the input shape."""
    if mode == "freq_mask":
        return _freq_mask(mel, params, rng)
    if mode == "time_warp":
        return _time_warp(mel, params, rng)
    raise ParameterError(f"unknown augmentation mode {mode!r}")


def _freq_mask(mel: MelSpectrogram, params: AugmentParams, rng: np.random.Generator) -> MelSpectrogram:
    rows = mel.rows
    if not 0 <= params.max_mask_width < rows:
        raise ParameterError(f"mask width must be within [0, {rows}), got {params.max_mask_width}")
    width = params.band_width if params.band_width is not None else int(rng.integers(0, params.max_mask_width + 1))
    if not 0 <= width < rows:
        raise ParameterError(f"mask width must be within [0, {rows}), got {width}")
    start = params.band_start if params.band_start is not None else int(rng.integers(0, rows - width + 1))
    if not 0 <= start <= rows - width:
        raise ParameterError(f"mask band [{start}, {start + width}) does not fit in {rows} rows")
    values = mel.values.copy()
    values[start:start + width, :] = params.mask_value
    return MelSpectrogram(values)


def _time_warp(mel: MelSpectrogram, params: AugmentParams, rng: np.random.Generator) -> MelSpectrogram:
    """
    Move one anchor frame by `distance` frames and stretch both sides linearly.

    The frame map is piecewise linear and monotone, endpoints stay fixed, and each
    output frame linearly interpolates the two nearest source frames.
    """
    width = mel.width
    limit = params.max_warp_distance
    if limit < 0 or 2 * limit >= width:
        raise ParameterError(f"warp distance must be within [0, {width} / 2), got {limit}")
    distance = params.warp_distance if params.warp_distance is not None else int(rng.integers(-limit, limit + 1))
    if 2 * abs(distance) >= width:
        raise ParameterError(f"warp distance must be within (-{width} / 2, {width} / 2), got {distance}")
    if distance == 0:
        return MelSpectrogram(mel.values.copy())
    margin = abs(distance) + 1
    anchor = params.warp_anchor if params.warp_anchor is not None else int(rng.integers(margin, width - margin))
    if not margin <= anchor < width - margin:
        raise ParameterError(f"warp anchor {anchor} leaves no room for a {distance}-frame warp")

    frames = np.arange(width, dtype=np.float64)
    # Inverse map: output frame -> source position.
    source = np.interp(frames, [0.0, anchor + distance, width - 1.0], [0.0, float(anchor), width - 1.0])
    lower = np.floor(source).astype(np.int64)
    upper = np.minimum(lower + 1, width - 1)
    fraction = (source - lower).astype(np.float32)
    values = mel.values[:, lower] * (1.0 - fraction) + mel.values[:, upper] * fraction
    return MelSpectrogram(values)


def random_augment(mel: MelSpectrogram, cfg: AugmentConfig, rng: np.random.Generator) -> MelSpectrogram:
    """Training-time policy: each augmentation fires independently with its probability."""
    if not cfg.enabled:
        return mel
    params = AugmentParams(
        max_mask_width=min(cfg.freq_mask_max_width, mel.rows - 1),
        max_warp_distance=min(cfg.time_warp_max_distance, max(0, (mel.width - 3) // 2)),
        mask_value=cfg.mask_value,
    )
    if rng.random() < cfg.time_warp_prob:
        mel = augment(mel, "time_warp", params, rng)
    if rng.random() < cfg.freq_mask_prob:
        mel = augment(mel, "freq_mask", params, rng)
    return mel
