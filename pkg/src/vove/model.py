"""ECAPA-TDNN style multi-label attribute classifier with an auxiliary speaker head.

The attribute logits ``f(x)`` give the Vo-Ve embedding ``sigmoid(f(x))``;
the speaker head consumes the same pre-sigmoid logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from vove.attributes import NUM_ATTRIBUTES
from vove.errors import ShapeError, ValidationError


@dataclass(frozen=True)
class ModelConfig:
    backbone_channels: int = 64
    embedding_dim: int = NUM_ATTRIBUTES
    n_speakers: int = 1
    svhead_hidden: int = 192
    res2_scale: int = 8
    se_bottleneck: int | None = None
    attention_channels: int | None = None
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    epochs: int = 30
    batch: int = 32
    crop_seconds: float = 3.0
    val_fraction: float = 0.1
    patience: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.embedding_dim != NUM_ATTRIBUTES:
            raise ValidationError(f"embedding_dim is fixed at {NUM_ATTRIBUTES}")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        for name in ("backbone_channels", "n_speakers", "res2_scale", "batch"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.epochs < 0 or self.svhead_hidden < 0:
            raise ValidationError("epochs and svhead_hidden must be non-negative")
        if self.backbone_channels % self.res2_scale:
            raise ValidationError("backbone_channels must be divisible by res2_scale")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValidationError("val_fraction must lie in [0, 1)")
        if self.crop_seconds <= 0:
            raise ValidationError("crop_seconds must be > 0")

    @property
    def se_dim(self) -> int:
        return self.se_bottleneck or max(self.backbone_channels // 4, 1)

    @property
    def attention_dim(self) -> int:
        return self.attention_channels or max(self.backbone_channels // 4, 1)


class ConvReluBn(nn.Module):
    def __init__(self, cin, cout, kernel_size=1, dilation=1):
        super().__init__()
        self.conv = nn.Conv1d(cin, cout, kernel_size, dilation=dilation,
                              padding=dilation * (kernel_size - 1) // 2, bias=False)
        self.bn = nn.BatchNorm1d(cout)

    def forward(self, x):
        return self.bn(F.relu(self.conv(x)))


class Res2Conv(nn.Module):
    def __init__(self, channels, kernel_size, dilation, scale):
        super().__init__()
        self.scale = scale
        self.width = channels // scale
        self.blocks = nn.ModuleList(
            ConvReluBn(self.width, self.width, kernel_size, dilation) for _ in range(max(scale - 1, 1))
        )

    def forward(self, x):
        if self.scale == 1:
            return self.blocks[0](x)
        chunks = torch.split(x, self.width, dim=1)
        out = []
        y = None
        for i, block in enumerate(self.blocks):
            y = block(chunks[i] if y is None else chunks[i] + y)
            out.append(y)
        out.append(chunks[-1])
        return torch.cat(out, dim=1)


class SqueezeExcite(nn.Module):
    def __init__(self, channels, bottleneck):
        super().__init__()
        self.down = nn.Linear(channels, bottleneck)
        self.up = nn.Linear(bottleneck, channels)

    def forward(self, x):
        s = torch.sigmoid(self.up(F.relu(self.down(x.mean(dim=2)))))
        return x * s.unsqueeze(2)


class SERes2Block(nn.Module):
    def __init__(self, channels, dilation, scale, se_dim):
        super().__init__()
        self.pre = ConvReluBn(channels, channels)
        self.res2 = Res2Conv(channels, 3, dilation, scale)
        self.post = ConvReluBn(channels, channels)
        self.se = SqueezeExcite(channels, se_dim)

    def forward(self, x):
        return x + self.se(self.post(self.res2(self.pre(x))))


class AttentiveStatsPool(nn.Module):
    """Attention-weighted mean and std over time, with global context in the attention input."""

    def __init__(self, channels, attention_dim):
        super().__init__()
        self.attn = nn.Sequential(
            nn.Conv1d(channels * 3, attention_dim, 1),
            nn.ReLU(),
            nn.BatchNorm1d(attention_dim),
            nn.Tanh(),
            # per-channel bias would cancel in the softmax over time
            nn.Conv1d(attention_dim, channels, 1, bias=False),
        )

    def forward(self, x):
        t = x.shape[2]
        mu = x.mean(dim=2, keepdim=True)
        sd = torch.sqrt(x.var(dim=2, keepdim=True, unbiased=False).clamp(min=1e-6))
        ctx = torch.cat([x, mu.expand(-1, -1, t), sd.expand(-1, -1, t)], dim=1)
        w = torch.softmax(self.attn(ctx), dim=2)
        mean = (w * x).sum(dim=2)
        std = torch.sqrt(((w * x * x).sum(dim=2) - mean * mean).clamp(min=1e-6))
        return torch.cat([mean, std], dim=1)


class SpeakerHead(nn.Module):
    """ReLU, fully connected layer with batch norm, then speaker logits.

    ``hidden=0`` maps straight to ``n_speakers`` outputs followed by batch norm.
    """

    def __init__(self, n_in, hidden, n_speakers):
        super().__init__()
        width = hidden or n_speakers
        self.fc = nn.Linear(n_in, width, bias=False)
        self.bn = nn.BatchNorm1d(width)
        self.out = nn.Linear(hidden, n_speakers) if hidden else None

    def forward(self, logits):
        h = self.bn(self.fc(F.relu(logits)))
        return self.out(h) if self.out is not None else h


class VoVeNet(nn.Module):
    def __init__(self, n_mels: int, cfg: ModelConfig):
        super().__init__()
        c = cfg.backbone_channels
        self.n_mels = n_mels
        self.cfg = cfg
        self.stem = ConvReluBn(n_mels, c, kernel_size=5)
        self.blocks = nn.ModuleList(SERes2Block(c, d, cfg.res2_scale, cfg.se_dim) for d in (2, 3, 4))
        self.mfa = nn.Conv1d(3 * c, 3 * c, 1)
        self.pool = AttentiveStatsPool(3 * c, cfg.attention_dim)
        self.pool_bn = nn.BatchNorm1d(6 * c)
        self.classifier = nn.Linear(6 * c, NUM_ATTRIBUTES)
        self.speaker_head = SpeakerHead(NUM_ATTRIBUTES, cfg.svhead_hidden, cfg.n_speakers)

    def attribute_logits(self, x: torch.Tensor) -> torch.Tensor:
        """x: (batch, frames, n_mels) log-Mel features -> (batch, 44) logits."""
        if x.ndim != 3 or x.shape[2] != self.n_mels:
            raise ShapeError(f"expected input (batch, frames, {self.n_mels}), got {tuple(x.shape)}")
        h = self.stem(x.transpose(1, 2))
        outs = []
        for block in self.blocks:
            h = block(h)
            outs.append(h)
        h = F.relu(self.mfa(torch.cat(outs, dim=1)))
        return self.classifier(self.pool_bn(self.pool(h)))

    def forward(self, x):
        logits = self.attribute_logits(x)
        return logits, self.speaker_head(logits)

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.attribute_logits(x))


def bce_term(attr_logits: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy of sigmoid(logits) against soft targets, summed over attributes, mean over batch."""
    per = F.binary_cross_entropy_with_logits(attr_logits, y.to(attr_logits.dtype), reduction="none")
    return per.sum(dim=1).mean()


def ce_term(spk_logits: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    s = torch.as_tensor(s, dtype=torch.long)
    n = spk_logits.shape[1]
    if s.numel() and (int(s.min()) < 0 or int(s.max()) >= n):
        raise IndexError(f"speaker index out of range [0, {n})")
    return F.cross_entropy(spk_logits, s)


def total_loss(attr_logits, spk_logits, y, s) -> torch.Tensor:
    if attr_logits.shape != torch.Size(y.shape) or attr_logits.shape[0] != spk_logits.shape[0]:
        raise ShapeError("inconsistent batch shapes for loss")
    return bce_term(attr_logits, y) + ce_term(spk_logits, s)
