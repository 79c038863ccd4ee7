"""
Adversarial, identity, consistency, diversification, norm and reconstruction losses.

All L1-style terms use mean reduction. Tensors are taken as-is, so the same functions
serve float32 training and float64 gradient checks.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Mapping

import torch
import torch.nn.functional as F

from .config import LossWeights
from .errors import LabelError, NumericError, ShapeError
from .features import column_norm

COMPONENTS = ("adv", "fake_id", "trg_id", "style", "content", "ds", "norm", "rec")


def adversarial_loss(real_logit: torch.Tensor, fake_logit: torch.Tensor) -> torch.Tensor:
    """E[log sigmoid(real)] + E[log(1 - sigmoid(fake))]; the discriminator maximizes it."""
    return F.logsigmoid(real_logit).mean() + F.logsigmoid(-fake_logit).mean()


def generator_adversarial_loss(fake_logit: torch.Tensor, non_saturating: bool = False) -> torch.Tensor:
    """
    The generator's share of the adversarial loss.

    The literal form is the fake term E[log(1 - sigmoid(fake))], minimized. The
    non-saturating form minimizes -E[log sigmoid(fake)] instead, which keeps gradients
    alive while the discriminator still wins easily.
    """
    if non_saturating:
        return -F.logsigmoid(fake_logit).mean()
    return F.logsigmoid(-fake_logit).mean()


def _check_labels(logits: torch.Tensor, labels: torch.Tensor, name: str) -> None:
    classes = logits.shape[-1]
    if labels.numel() and (int(labels.min()) < 0 or int(labels.max()) >= classes):
        raise LabelError(f"{name} labels must lie in [0, {classes}), got {labels.tolist()}")


def id_loss(
    fake_logits: torch.Tensor,
    src_logits: torch.Tensor,
    t1_logits: torch.Tensor,
    t2_logits: torch.Tensor,
    y_s: torch.Tensor,
    y_t: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Return (fake_id, trg_id): classification of the conversion and of the real inputs."""
    _check_labels(src_logits, y_s, "source")
    for logits in (fake_logits, t1_logits, t2_logits):
        _check_labels(logits, y_t, "target")
    fake_id = F.cross_entropy(fake_logits, y_t)
    trg_id = F.cross_entropy(src_logits, y_s) + F.cross_entropy(t1_logits, y_t) + F.cross_entropy(t2_logits, y_t)
    return fake_id, trg_id


def _l1(a: torch.Tensor, b: torch.Tensor, name: str) -> torch.Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"{name}: shapes {tuple(a.shape)} and {tuple(b.shape)} differ")
    return (a - b).abs().mean()


def style_consistency_loss(f_t1: torch.Tensor, f_conv: torch.Tensor) -> torch.Tensor:
    return _l1(f_t1, f_conv, "style_consistency_loss")


def content_consistency_loss(c_s: torch.Tensor, c_conv: torch.Tensor) -> torch.Tensor:
    return _l1(c_s, c_conv, "content_consistency_loss")


def style_diversification_loss(g1: torch.Tensor, g2: torch.Tensor) -> torch.Tensor:
    return -_l1(g1, g2, "style_diversification_loss")


def norm_consistency_loss(x_s: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Mean over frames of the gap between absolute column sums of source and conversion."""
    if x_s.shape[-1] != g.shape[-1]:
        raise ShapeError(f"norm_consistency_loss: widths {x_s.shape[-1]} and {g.shape[-1]} differ")
    return (column_norm(x_s) - column_norm(g)).abs().mean()


def reconstruction_loss(x_s: torch.Tensor, g_self: torch.Tensor) -> torch.Tensor:
    return _l1(x_s, g_self, "reconstruction_loss")


@dataclass
class GeneratorLossReport:
    adv: torch.Tensor
    fake_id: torch.Tensor
    trg_id: torch.Tensor
    style: torch.Tensor
    content: torch.Tensor
    ds: torch.Tensor
    norm: torch.Tensor
    rec: torch.Tensor
    total: torch.Tensor

    @property
    def identity(self) -> torch.Tensor:
        return self.fake_id + self.trg_id

    def to_dict(self) -> dict[str, float]:
        return {item.name: float(getattr(self, item.name).detach()) for item in fields(self)}


def total_generator_objective(
    components: Mapping[str, torch.Tensor | float],
    weights: LossWeights,
) -> GeneratorLossReport:
    """Weighted sum of all generator terms; the identity weight applies to fake_id + trg_id."""
    missing = [name for name in COMPONENTS if name not in components]
    if missing:
        raise ValueError(f"missing loss component(s): {', '.join(missing)}")
    values: dict[str, torch.Tensor] = {}
    for name in COMPONENTS:
        value = components[name]
        tensor = value if isinstance(value, torch.Tensor) else torch.tensor(float(value), dtype=torch.float64)
        if not bool(torch.isfinite(tensor.detach()).all()):
            partial = {key: float(v.detach()) for key, v in values.items()}
            raise NumericError(name, f"loss component is not finite ({float(tensor.detach())})", partial)
        values[name] = tensor
    total = (
        weights.adv * values["adv"]
        + weights.id * (values["fake_id"] + values["trg_id"])
        + weights.style * values["style"]
        + weights.content * values["content"]
        + weights.ds * values["ds"]
        + weights.norm * values["norm"]
        + weights.rec * values["rec"]
    )
    return GeneratorLossReport(total=total, **values)
