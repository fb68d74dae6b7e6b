"""Conditioned convolutional attention U-Net enhancement model.

Real and imaginary input channels are batch-normalized per frequency bin,
then encoded by six attention-infused conv blocks that halve the frequency
axis. At the bottom, per-frame features are concatenated with the speaker
d-vector and refined by convolution/attention bottleneck blocks; a mirrored
decoder with U-Net skip concatenations expands back to full resolution and
a final convolution emits the two mask channels. Convolutions left-pad the
time axis and all attention is causally masked, so the model is causal.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import CausalMultiheadAttention
from .complex_layers import causal_time_pad


@dataclass(frozen=True)
class PdcattunetConfig:
    encoder_filters: tuple = (32, 64, 128, 128, 128, 128)
    decoder_filters: tuple = (128, 128, 128, 64, 32, 16)
    bottleneck_hidden: int = 128
    num_heads: int = 4
    num_bottleneck_blocks: int = 2
    pool_factor: int = 2
    dvector_dim: int = 128
    num_bins: int = 256
    kernel: tuple = (5, 2)
    bottleneck_kernel: int = 3

    def __post_init__(self):
        object.__setattr__(self, "encoder_filters", tuple(self.encoder_filters))
        object.__setattr__(self, "decoder_filters", tuple(self.decoder_filters))
        object.__setattr__(self, "kernel", tuple(self.kernel))
        if len(self.encoder_filters) != len(self.decoder_filters):
            raise ValueError("encoder and decoder must have the same depth")
        down = self.pool_factor ** len(self.encoder_filters)
        if self.num_bins % down:
            raise ValueError(
                f"{self.num_bins} bins not divisible by pool factor "
                f"{self.pool_factor} over {len(self.encoder_filters)} stages")
        if self.bottleneck_hidden % self.num_heads:
            raise ValueError("bottleneck hidden size must divide into the heads")
        for f in self._attention_dims():
            if f % self.num_heads:
                raise ValueError(
                    f"attention width {f} not divisible by {self.num_heads} heads")

    def _attention_dims(self):
        dims = []
        f = self.num_bins
        for _ in self.encoder_filters:
            f //= self.pool_factor
            dims.append(f)
        for _ in self.decoder_filters:
            f *= self.pool_factor
            dims.append(f)
        return dims

    @property
    def bottleneck_bins(self) -> int:
        return self.num_bins // self.pool_factor ** len(self.encoder_filters)

    def to_dict(self) -> dict:
        return {
            "encoder_filters": list(self.encoder_filters),
            "decoder_filters": list(self.decoder_filters),
            "bottleneck_hidden": self.bottleneck_hidden,
            "num_heads": self.num_heads,
            "num_bottleneck_blocks": self.num_bottleneck_blocks,
            "pool_factor": self.pool_factor,
            "dvector_dim": self.dvector_dim,
            "num_bins": self.num_bins,
            "kernel": list(self.kernel),
            "bottleneck_kernel": self.bottleneck_kernel,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PdcattunetConfig":
        return cls(**d)


class InputFeatureNorm(nn.Module):
    """1-D batch norm over the 2F (real, imag) x bin channels of the input.

    Inference reads frozen running statistics only, preserving causality.
    """

    def __init__(self, num_bins: int, eps: float = 1e-5):
        super().__init__()
        self.bn = nn.BatchNorm1d(2 * num_bins, eps=eps)

    def forward(self, x: torch.Tensor) -> torch.Tensor:  # (B, 2, T, F)
        b, c, t, f = x.shape
        y = x.permute(0, 1, 3, 2).reshape(b, c * f, t)
        y = self.bn(y)
        return y.reshape(b, c, f, t).permute(0, 1, 3, 2)


class ConvBlock(nn.Module):
    """Causal 2-D convolution + PReLU + batch norm on (B, C, F, T)."""

    def __init__(self, in_channels, out_channels, kernel=(5, 2)):
        super().__init__()
        self.kernel = kernel
        self.freq_pad = (kernel[0] - 1) // 2
        self.conv = nn.Conv2d(in_channels, out_channels, kernel)
        self.prelu = nn.PReLU()
        self.bn = nn.BatchNorm2d(out_channels)

    def forward(self, x):
        x = F.pad(x, (self.kernel[1] - 1, 0, self.freq_pad, self.freq_pad))
        return self.bn(self.prelu(self.conv(x)))


class EncoderBlock(nn.Module):
    """Conv block, frequency max-pool, attention branch, concat, conv block."""

    def __init__(self, in_channels, out_channels, attn_width, num_heads,
                 pool_factor=2, kernel=(5, 2)):
        super().__init__()
        self.conv1 = ConvBlock(in_channels, out_channels, kernel)
        self.pool = nn.MaxPool2d((pool_factor, 1))
        self.conv_qkv = ConvBlock(out_channels, 3, kernel)
        self.attention = CausalMultiheadAttention(attn_width, num_heads)
        self.norm = nn.LayerNorm(attn_width)
        self.conv2 = ConvBlock(out_channels + 1, out_channels, kernel)

    def _attend(self, a):
        qkv = self.conv_qkv(a)  # (B, 3, F', T)
        q, k, v = (qkv[:, i].transpose(1, 2) for i in range(3))  # (B, T, F')
        att = self.norm(self.attention(q, k, v))
        return att.transpose(1, 2).unsqueeze(1)  # (B, 1, F', T)

    def forward(self, x):
        a = self.pool(self.conv1(x))
        return self.conv2(torch.cat([a, self._attend(a)], dim=1))


class DecoderBlock(nn.Module):
    """Same pipeline as the encoder block with nearest-neighbor upsampling."""

    def __init__(self, in_channels, out_channels, attn_width, num_heads,
                 pool_factor=2, kernel=(5, 2)):
        super().__init__()
        self.pool_factor = pool_factor
        self.conv1 = ConvBlock(in_channels, out_channels, kernel)
        self.conv_qkv = ConvBlock(out_channels, 3, kernel)
        self.attention = CausalMultiheadAttention(attn_width, num_heads)
        self.norm = nn.LayerNorm(attn_width)
        self.conv2 = ConvBlock(out_channels + 1, out_channels, kernel)

    def forward(self, x):
        a = self.conv1(x)
        a = F.interpolate(a, scale_factor=(self.pool_factor, 1), mode="nearest")
        qkv = self.conv_qkv(a)
        q, k, v = (qkv[:, i].transpose(1, 2) for i in range(3))
        att = self.norm(self.attention(q, k, v)).transpose(1, 2).unsqueeze(1)
        return self.conv2(torch.cat([a, att], dim=1))


class BottleneckBlock(nn.Module):
    """Causal 1-D conv and attention refinement with two skip summations."""

    def __init__(self, hidden, num_heads, kernel=3):
        super().__init__()
        self.kernel = kernel
        self.conv1 = nn.Conv1d(hidden, hidden, kernel)
        self.prelu1 = nn.PReLU()
        self.norm1 = nn.LayerNorm(hidden)
        self.attention = CausalMultiheadAttention(hidden, num_heads)
        self.norm2 = nn.LayerNorm(hidden)
        self.conv2 = nn.Conv1d(hidden, hidden, kernel)
        self.prelu2 = nn.PReLU()
        self.norm3 = nn.LayerNorm(hidden)

    def _conv(self, conv, prelu, x):  # (B, T, H) -> (B, T, H)
        y = conv(causal_time_pad(x.transpose(1, 2), self.kernel))
        return prelu(y).transpose(1, 2)

    def forward(self, x):
        x1 = self.norm1(self._conv(self.conv1, self.prelu1, x))
        z = x1 + self.norm2(self.attention(x1, x1, x1))
        w = self._conv(self.conv2, self.prelu2, z)
        return self.norm3(w + x)


class Pdcattunet(nn.Module):
    def __init__(self, cfg: PdcattunetConfig = PdcattunetConfig()):
        super().__init__()
        self.cfg = cfg
        self.input_norm = InputFeatureNorm(cfg.num_bins)

        enc = []
        in_ch = 2
        f = cfg.num_bins
        for out_ch in cfg.encoder_filters:
            f //= cfg.pool_factor
            enc.append(EncoderBlock(in_ch, out_ch, f, cfg.num_heads,
                                    cfg.pool_factor, cfg.kernel))
            in_ch = out_ch
        self.encoder = nn.ModuleList(enc)

        flat = cfg.encoder_filters[-1] * cfg.bottleneck_bins
        self.in_proj = nn.Linear(flat + cfg.dvector_dim, cfg.bottleneck_hidden)
        self.bottleneck = nn.ModuleList([
            BottleneckBlock(cfg.bottleneck_hidden, cfg.num_heads, cfg.bottleneck_kernel)
            for _ in range(cfg.num_bottleneck_blocks)
        ])
        self.out_proj = nn.Linear(cfg.bottleneck_hidden, flat)

        dec = []
        skip_channels = tuple(reversed(cfg.encoder_filters))
        prev = cfg.encoder_filters[-1]
        for j, out_ch in enumerate(cfg.decoder_filters):
            f *= cfg.pool_factor
            dec.append(DecoderBlock(prev + skip_channels[j], out_ch, f,
                                    cfg.num_heads, cfg.pool_factor, cfg.kernel))
            prev = out_ch
        self.decoder = nn.ModuleList(dec)
        self.mask_conv = nn.Conv2d(cfg.decoder_filters[-1], 2, kernel_size=1)

    def forward(self, spec: torch.Tensor, dvec: torch.Tensor) -> torch.Tensor:
        """(B, T, F) complex spectrogram + (B, D) d-vector -> complex mask."""
        if spec.shape[-1] != self.cfg.num_bins:
            raise ValueError(f"expected {self.cfg.num_bins} bins, got {spec.shape[-1]}")
        x = torch.stack([spec.real, spec.imag], dim=1)  # (B, 2, T, F)
        x = self.input_norm(x).permute(0, 1, 3, 2)      # (B, 2, F, T)

        skips = []
        for block in self.encoder:
            x = block(x)
            skips.append(x)

        b, c, f, t = x.shape
        flat = x.permute(0, 3, 1, 2).reshape(b, t, c * f)
        dv = dvec.unsqueeze(1).expand(b, t, dvec.shape[-1])
        h = self.in_proj(torch.cat([flat, dv], dim=-1))
        for block in self.bottleneck:
            h = block(h)
        x = self.out_proj(h).reshape(b, t, c, f).permute(0, 2, 3, 1)

        for j, block in enumerate(self.decoder):
            x = block(torch.cat([x, skips[-1 - j]], dim=1))

        out = self.mask_conv(x)  # (B, 2, F, T)
        mask = torch.complex(out[:, 0], out[:, 1])
        return mask.transpose(1, 2)


def build_pdcattunet(cfg: PdcattunetConfig = PdcattunetConfig()) -> Pdcattunet:
    return Pdcattunet(cfg)
