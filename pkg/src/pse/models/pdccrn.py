"""Conditioned complex convolutional-recurrent enhancement model.

A stack of complex conv blocks halves the frequency axis at every stage;
the per-frame encoder output (real and imaginary parts separately) is
concatenated with the speaker d-vector and run through a complex LSTM
bottleneck, projected back, and decoded by mirrored complex transposed-conv
blocks with encoder skip connections. The two output channels form an
unbounded complex ratio mask. Every stage is causal in time.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .complex_layers import (
    ComplexBlock,
    ComplexConv2d,
    ComplexConvTranspose2d,
    ComplexLinear,
    ComplexLSTM,
)


@dataclass(frozen=True)
class PdccrnConfig:
    encoder_filters: tuple = (16, 32, 64, 128, 128, 128)
    kernel: tuple = (5, 2)
    stride: tuple = (2, 1)
    lstm_hidden: int = 128
    dvector_dim: int = 128
    num_bins: int = 256

    def __post_init__(self):
        object.__setattr__(self, "encoder_filters", tuple(self.encoder_filters))
        object.__setattr__(self, "kernel", tuple(self.kernel))
        object.__setattr__(self, "stride", tuple(self.stride))
        down = self.stride[0] ** len(self.encoder_filters)
        if self.num_bins % down:
            raise ValueError(
                f"{self.num_bins} bins not divisible by the total frequency "
                f"downsampling factor {down}")

    @property
    def bottleneck_bins(self) -> int:
        return self.num_bins // self.stride[0] ** len(self.encoder_filters)

    def to_dict(self) -> dict:
        return {
            "encoder_filters": list(self.encoder_filters),
            "kernel": list(self.kernel),
            "stride": list(self.stride),
            "lstm_hidden": self.lstm_hidden,
            "dvector_dim": self.dvector_dim,
            "num_bins": self.num_bins,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PdccrnConfig":
        return cls(**d)


class Pdccrn(nn.Module):
    def __init__(self, cfg: PdccrnConfig = PdccrnConfig()):
        super().__init__()
        self.cfg = cfg
        channels = (1,) + cfg.encoder_filters
        self.encoder = nn.ModuleList([
            ComplexBlock(ComplexConv2d(channels[i], channels[i + 1], cfg.kernel, cfg.stride),
                         channels[i + 1])
            for i in range(len(cfg.encoder_filters))
        ])
        flat = cfg.encoder_filters[-1] * cfg.bottleneck_bins
        self.lstm = ComplexLSTM(flat + cfg.dvector_dim, cfg.lstm_hidden)
        self.proj = ComplexLinear(cfg.lstm_hidden, flat)
        decoder = []
        rev = channels[::-1]  # e.g. (128, 128, 128, 64, 32, 16, 1)
        for i in range(len(cfg.encoder_filters)):
            in_ch = rev[i] * 2  # skip connections concatenate channelwise
            out_ch = rev[i + 1]
            last = i == len(cfg.encoder_filters) - 1
            decoder.append(ComplexBlock(
                ComplexConvTranspose2d(in_ch, out_ch, cfg.kernel, cfg.stride),
                out_ch, activation=not last))
        self.decoder = nn.ModuleList(decoder)

    def forward(self, spec: torch.Tensor, dvec: torch.Tensor) -> torch.Tensor:
        """(B, T, F) complex spectrogram + (B, D) d-vector -> complex mask."""
        if spec.shape[-1] != self.cfg.num_bins:
            raise ValueError(f"expected {self.cfg.num_bins} bins, got {spec.shape[-1]}")
        xr = spec.real.transpose(1, 2).unsqueeze(1)  # (B, 1, F, T)
        xi = spec.imag.transpose(1, 2).unsqueeze(1)
        skips = []
        for block in self.encoder:
            xr, xi = block(xr, xi)
            skips.append((xr, xi))

        b, c, f, t = xr.shape
        flat_r = xr.permute(0, 3, 1, 2).reshape(b, t, c * f)
        flat_i = xi.permute(0, 3, 1, 2).reshape(b, t, c * f)
        dv = dvec.unsqueeze(1).expand(b, t, dvec.shape[-1])
        hr, hi = self.lstm(torch.cat([flat_r, dv], -1), torch.cat([flat_i, dv], -1))
        yr, yi = self.proj(hr, hi)
        xr = yr.reshape(b, t, c, f).permute(0, 2, 3, 1)
        xi = yi.reshape(b, t, c, f).permute(0, 2, 3, 1)

        for i, block in enumerate(self.decoder):
            sr, si = skips[-1 - i]
            xr = torch.cat([xr, sr], dim=1)
            xi = torch.cat([xi, si], dim=1)
            xr, xi = block(xr, xi)

        mask = torch.complex(xr.squeeze(1), xi.squeeze(1))  # (B, F, T)
        return mask.transpose(1, 2)


def build_pdccrn(cfg: PdccrnConfig = PdccrnConfig()) -> Pdccrn:
    return Pdccrn(cfg)
