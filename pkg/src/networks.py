"""
Generator and discriminator networks.

With the default 80 x 224 mel input the shapes are:

  content encoder   (B, 1, 80, 224) -> (B, 256, 20, 112)
  pitch shift       (B, 256, 20, 112) -> offsets (B, 112) in (-1, 1)
  style encoder     (B, 1, 80, 224) -> map (B, 2048, 4, 14) -> style (B, 4, 256) + logits (B, K)
  decoder           content + style -> 4 paths of (B, 64, 20, 224) -> (B, 1, 80, 224)
  discriminator     (B, 1, 80, 224), labels -> (B,) realness logits
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F
import torchvision
from torch import nn

from .config import ModelConfig
from .errors import ConfigError, LabelError, ShapeError
from .layers import adain, apply_vertical_shift

STYLE_MAP_SIZE = (4, 14)
LEAKY_SLOPE = 0.2
# tanh rounds to exactly 1.0 in float32 once |x| > ~9; offsets must stay inside (-1, 1).
OFFSET_LIMIT = 1.0 - 1e-6


def _pool(x: torch.Tensor, factor: tuple[int, int]) -> torch.Tensor:
    kernel = tuple(min(k, size) for k, size in zip(factor, x.shape[-2:]))
    if kernel == (1, 1):
        return x
    return F.avg_pool2d(x, kernel, ceil_mode=True)


class ResBlock(nn.Module):
    """Pre-activation residual block used by the content encoder and the discriminator."""

    def __init__(
        self,
        dim_in: int,
        dim_out: int,
        downsample: tuple[int, int] | None = None,
        normalize: bool = True,
    ) -> None:
        super().__init__()
        self.downsample = downsample
        self.normalize = normalize
        self.actv = nn.LeakyReLU(LEAKY_SLOPE)
        self.conv1 = nn.Conv2d(dim_in, dim_in, 3, 1, 1)
        self.conv2 = nn.Conv2d(dim_in, dim_out, 3, 1, 1)
        if normalize:
            self.norm1 = nn.InstanceNorm2d(dim_in, affine=True)
            self.norm2 = nn.InstanceNorm2d(dim_in, affine=True)
        self.shortcut = nn.Conv2d(dim_in, dim_out, 1, 1, 0, bias=False) if dim_in != dim_out else nn.Identity()

    def _residual(self, x: torch.Tensor) -> torch.Tensor:
        if self.normalize:
            x = self.norm1(x)
        x = self.conv1(self.actv(x))
        if self.downsample:
            x = _pool(x, self.downsample)
        if self.normalize:
            x = self.norm2(x)
        return self.conv2(self.actv(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        skip = self.shortcut(x)
        if self.downsample:
            skip = _pool(skip, self.downsample)
        return (skip + self._residual(x)) / math.sqrt(2)


class ContentEncoder(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        base, channels = cfg.base_channels, cfg.content_channels
        middle = max(base, channels // 2)
        self.stem = nn.Conv2d(1, base, 3, 1, 1)
        self.blocks = nn.Sequential(
            ResBlock(base, middle, downsample=(2, 2)),
            ResBlock(middle, channels, downsample=(2, 1)),
            *(ResBlock(channels, channels) for _ in range(4)),
        )

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        return self.blocks(self.stem(mel))


class PitchShiftModule(nn.Module):
    """Five 5x5 convolutions, a zero-initialized 1x1 projection and tanh over the time axis."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        layers: list[nn.Module] = []
        dim_in = cfg.content_channels
        for _ in range(5):
            layers += [
                nn.Conv2d(dim_in, cfg.base_channels, 5, 1, 2),
                nn.InstanceNorm2d(cfg.base_channels, affine=True),
                nn.LeakyReLU(LEAKY_SLOPE),
            ]
            dim_in = cfg.base_channels
        self.body = nn.Sequential(*layers)
        self.project = nn.Conv2d(cfg.base_channels, 1, 1)
        nn.init.zeros_(self.project.weight)
        nn.init.zeros_(self.project.bias)

    def forward(self, content: torch.Tensor) -> torch.Tensor:
        projected = self.project(self.body(content))
        return torch.tanh(projected.mean(dim=(1, 2))) * OFFSET_LIMIT


class StyleEncoder(nn.Module):
    """
    Residual classifier backbone split into per-subband style codes.

    The backbone is a torchvision ResNet with a 1-channel stem and the stride of its last
    stage removed. Its map is pooled to STYLE_MAP_SIZE, split vertically into one local
    vector per subband and concatenated with the global average vector. A shared
    three-layer perceptron (linear, instance norm, ReLU at every layer) maps each
    concatenation to a style code; a shared dropout + linear head classifies each one
    and the logits are averaged across subbands.
    """

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.num_subbands = cfg.num_subbands
        backbone = getattr(torchvision.models, cfg.style_backbone)(weights=None)
        backbone.conv1 = nn.Conv2d(1, 64, kernel_size=7, stride=2, padding=3, bias=False)
        for module in backbone.layer4[0].modules():
            if isinstance(module, nn.Conv2d) and module.stride == (2, 2):
                module.stride = (1, 1)
        self.backbone = nn.Sequential(
            backbone.conv1,
            backbone.bn1,
            backbone.relu,
            backbone.maxpool,
            backbone.layer1,
            backbone.layer2,
            backbone.layer3,
            backbone.layer4,
            nn.AdaptiveAvgPool2d(STYLE_MAP_SIZE),
        )
        self.split = nn.AdaptiveAvgPool2d((cfg.num_subbands, 1))
        joint = 2 * cfg.backbone_channels
        widths = [joint, 1024, 512, cfg.style_dim]
        mlp: list[nn.Module] = []
        for dim_in, dim_out in zip(widths, widths[1:]):
            mlp += [nn.Linear(dim_in, dim_out), _VectorInstanceNorm(), nn.ReLU()]
        self.mlp = nn.Sequential(*mlp)
        self.classifier = nn.Sequential(nn.Dropout(cfg.dropout_p), nn.Linear(joint, cfg.num_speakers))

    def feature_map(self, mel: torch.Tensor) -> torch.Tensor:
        return self.backbone(mel)

    def forward(self, mel: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.feature_map(mel)
        local = self.split(features).squeeze(-1).transpose(1, 2)
        global_vector = features.mean(dim=(2, 3)).unsqueeze(1).expand_as(local)
        joint = torch.cat([local, global_vector], dim=-1)
        style = self.mlp(joint)
        logits = self.classifier(joint).mean(dim=1)
        return style, logits


class _VectorInstanceNorm(nn.Module):
    """Instance norm over the feature axis of (B, parts, D) vectors."""

    def __init__(self) -> None:
        super().__init__()
        self.norm = nn.InstanceNorm1d(1, affine=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        batch, parts, dim = x.shape
        return self.norm(x.reshape(batch * parts, 1, dim)).reshape(batch, parts, dim)


class AdaINResBlock(nn.Module):
    """[conv 3x3, AdaIN, LeakyReLU] x 2 with a learnable skip when channel counts change."""

    def __init__(self, dim_in: int, dim_out: int, style_dim: int, upsample: bool = False) -> None:
        super().__init__()
        self.upsample = upsample
        self.dim_out = dim_out
        self.conv1 = nn.Conv2d(dim_in, dim_out, 3, 1, 1)
        self.conv2 = nn.Conv2d(dim_out, dim_out, 3, 1, 1)
        self.style = nn.Linear(style_dim, 4 * dim_out)
        self.actv = nn.LeakyReLU(LEAKY_SLOPE)
        self.skip = nn.Conv2d(dim_in, dim_out, 1, 1, 0, bias=False) if dim_in != dim_out else nn.Identity()

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=(1, 2), mode="nearest")
        gamma1, beta1, gamma2, beta2 = self.style(style).chunk(4, dim=-1)
        h = self.actv(adain(self.conv1(x), 1 + gamma1, beta1))
        h = self.actv(adain(self.conv2(h), 1 + gamma2, beta2))
        return (self.skip(x) + h) / math.sqrt(2)


class SubbandPath(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        channels, base = cfg.content_channels, cfg.base_channels
        schedule = [channels, channels, channels, channels // 2, channels // 2, base, base]
        self.blocks = nn.ModuleList(
            AdaINResBlock(dim_in, dim_out, cfg.style_dim, upsample=index == cfg.upsample_block)
            for index, (dim_in, dim_out) in enumerate(zip(schedule, schedule[1:]))
        )
        self.rows = cfg.n_mels // cfg.num_subbands
        self.frames = cfg.frames

    def forward(self, content: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        x = content
        for block in self.blocks:
            x = block(x, style)
        if x.shape[-2:] != (self.rows, self.frames):
            x = F.interpolate(x, size=(self.rows, self.frames), mode="nearest")
        return x


class Decoder(nn.Module):
    """One independent path per subband, stacked low to high and fused by two 3x3 convolutions."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.num_subbands = cfg.num_subbands
        self.paths = nn.ModuleList(SubbandPath(cfg) for _ in range(cfg.num_subbands))
        self.fuse = nn.Sequential(
            nn.Conv2d(cfg.base_channels, cfg.base_channels, 3, 1, 1),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv2d(cfg.base_channels, 1, 3, 1, 1),
        )

    def decode_paths(self, content: torch.Tensor, style: torch.Tensor) -> list[torch.Tensor]:
        if style.ndim != 3 or style.shape[1] != self.num_subbands:
            raise ConfigError(
                f"style code must have {self.num_subbands} parts, got shape {tuple(style.shape)}"
            )
        return [path(content, style[:, index]) for index, path in enumerate(self.paths)]

    def forward(self, content: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        return self.fuse(torch.cat(self.decode_paths(content, style), dim=2))


class Discriminator(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        base = cfg.base_channels
        schedule = [base, 2 * base, 4 * base, 4 * base, 4 * base]
        self.num_speakers = cfg.num_speakers
        self.stem = nn.Conv2d(1, base, 3, 1, 1)
        self.blocks = nn.Sequential(
            *(ResBlock(a, b, downsample=(2, 2), normalize=False) for a, b in zip(schedule, schedule[1:]))
        )
        self.head = nn.Sequential(
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv2d(schedule[-1], schedule[-1], 5, 1, 2),
            nn.LeakyReLU(LEAKY_SLOPE),
            nn.Conv2d(schedule[-1], cfg.num_speakers, 1, 1, 0),
        )

    def forward(self, mel: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        if labels.ndim != 1 or labels.shape[0] != mel.shape[0]:
            raise ShapeError(f"expected {mel.shape[0]} labels, got shape {tuple(labels.shape)}")
        if labels.numel() and (labels.min() < 0 or labels.max() >= self.num_speakers):
            raise LabelError(f"labels must lie in [0, {self.num_speakers}), got {labels.tolist()}")
        logits = self.head(self.blocks(self.stem(mel))).mean(dim=(2, 3))
        return logits.gather(1, labels.long().unsqueeze(1)).squeeze(1)


@dataclass
class StyleEncoderOutput:
    style: torch.Tensor
    class_logits: torch.Tensor


class SubbandGAN(nn.Module):
    """All sub-networks plus the operations the trainer and the converter call."""

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.content_encoder = ContentEncoder(cfg)
        self.pitch_shift = PitchShiftModule(cfg)
        self.style_encoder = StyleEncoder(cfg)
        self.decoder = Decoder(cfg)
        self.discriminator = Discriminator(cfg)
        self.content_dropout = nn.Dropout(cfg.dropout_p)

    def generator_parameters(self) -> list[nn.Parameter]:
        return [
            *self.content_encoder.parameters(),
            *self.pitch_shift.parameters(),
            *self.style_encoder.parameters(),
            *self.decoder.parameters(),
        ]

    def _check_mel(self, mel: torch.Tensor) -> None:
        expected = (1, self.cfg.n_mels, self.cfg.frames)
        if mel.ndim != 4 or tuple(mel.shape[1:]) != expected:
            raise ShapeError(f"mel batch must have shape (B, {', '.join(map(str, expected))}), got {tuple(mel.shape)}")

    def encode_content(self, mel: torch.Tensor) -> torch.Tensor:
        self._check_mel(mel)
        return self.content_encoder(mel)

    def predict_offsets(self, content: torch.Tensor) -> torch.Tensor:
        expected = (self.cfg.content_channels, self.cfg.content_rows, self.cfg.content_frames)
        if content.ndim != 4 or tuple(content.shape[1:]) != expected:
            raise ShapeError(f"content must have shape (B, {', '.join(map(str, expected))}), got {tuple(content.shape)}")
        return self.pitch_shift(content)

    def content_code(self, mel: torch.Tensor) -> torch.Tensor:
        """Content feature after the pitch shift and dropout, the generator's c."""
        content = self.encode_content(mel)
        if self.cfg.use_pitch_shift:
            content = apply_vertical_shift(content, self.predict_offsets(content), self.cfg.max_shift_rows)
        return self.content_dropout(content)

    def encode_style(self, mel: torch.Tensor) -> StyleEncoderOutput:
        self._check_mel(mel)
        style, logits = self.style_encoder(mel)
        return StyleEncoderOutput(style=style, class_logits=logits)

    def decode(self, content: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        return self.decoder(content, style)

    def discriminate(self, mel: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        return self.discriminator(mel, labels)

    def generate(self, source: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        return self.decode(self.content_code(source), style)
