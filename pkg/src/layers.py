"""
Differentiable building blocks shared by the generator networks.
"""

from __future__ import annotations

import torch

from .errors import ShapeError

ADAIN_EPS = 1e-5


def adain(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor, eps: float = ADAIN_EPS) -> torch.Tensor:
    """
    Adaptive instance normalization.

    Each channel of each item is normalized over its spatial extent (biased variance,
    epsilon-stabilized), then scaled by `gamma` and shifted by `beta`. Both may be
    per-channel `(C,)` or per-item `(B, C)`.
    """
    if x.ndim < 3:
        raise ShapeError(f"adain expects (B, C, ...) input, got shape {tuple(x.shape)}")
    batch, channels = x.shape[:2]
    if gamma.shape[-1] != channels or beta.shape[-1] != channels:
        raise ShapeError(
            f"gamma/beta must have {channels} channels, got {tuple(gamma.shape)} and {tuple(beta.shape)}"
        )
    dims = tuple(range(2, x.ndim))
    mean = x.mean(dim=dims, keepdim=True)
    var = x.var(dim=dims, keepdim=True, unbiased=False)
    normalized = (x - mean) / torch.sqrt(var + eps)
    view = (-1, channels) + (1,) * len(dims)
    return gamma.reshape(view) * normalized + beta.reshape(view)


def apply_vertical_shift(content: torch.Tensor, offsets: torch.Tensor, max_shift_rows: float) -> torch.Tensor:
    """
    Shift every frame of a (B, C, H, T) feature map vertically by offsets * max_shift_rows rows.

    Row h of the output reads the input at row h - shift, interpolating linearly between
    the two neighbouring rows. Rows that fall outside the map read as zero.
    """
    if content.ndim != 4:
        raise ShapeError(f"content must be (B, C, H, T), got shape {tuple(content.shape)}")
    batch, channels, height, frames = content.shape
    if offsets.shape != (batch, frames):
        raise ShapeError(f"offsets must have shape {(batch, frames)}, got {tuple(offsets.shape)}")
    if not 0 <= max_shift_rows < height:
        raise ShapeError(f"max_shift_rows must be within [0, {height}), got {max_shift_rows}")

    shift = (offsets * max_shift_rows).to(content.dtype)
    rows = torch.arange(height, device=content.device, dtype=content.dtype).view(1, height, 1)
    source = rows - shift.unsqueeze(1)
    lower = torch.floor(source)
    fraction = (source - lower).unsqueeze(1)
    lower_index = lower.long()

    def gather_rows(index: torch.Tensor) -> torch.Tensor:
        valid = ((index >= 0) & (index < height)).unsqueeze(1).to(content.dtype)
        clamped = index.clamp(0, height - 1).unsqueeze(1).expand(batch, channels, height, frames)
        return torch.gather(content, 2, clamped) * valid

    return gather_rows(lower_index) * (1.0 - fraction) + gather_rows(lower_index + 1) * fraction
