"""Complex-valued building blocks shared by the enhancement models.

A complex layer carries two weight sets (real, imaginary) and applies the
usual complex product rule to the real/imaginary parts of its input:
``y_r = L_r(x_r) - L_i(x_i)`` and ``y_i = L_r(x_i) + L_i(x_r)``. Tensors
travel as (real, imag) pairs; the spectrogram layout is (B, C, F, T) with
time last, so causal padding is always left padding of the final axis.
"""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


def causal_time_pad(x: torch.Tensor, kernel_t: int) -> torch.Tensor:
    """Left-pad the time (last) axis so a width-``kernel_t`` conv is causal."""
    return F.pad(x, (kernel_t - 1, 0))


class ComplexConv2d(nn.Module):
    """Complex 2-D convolution over (B, C, F, T) part pairs.

    Frequency padding is symmetric (``same``-style for the stride); time
    padding is left-only, making the layer causal.
    """

    def __init__(self, in_channels, out_channels, kernel_size=(5, 2), stride=(2, 1)):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride
        self.freq_pad = (kernel_size[0] - 1) // 2
        self.real_conv = nn.Conv2d(in_channels, out_channels, kernel_size, stride)
        self.imag_conv = nn.Conv2d(in_channels, out_channels, kernel_size, stride)

    def _pad(self, x):
        return F.pad(x, (self.kernel_size[1] - 1, 0, self.freq_pad, self.freq_pad))

    def forward(self, xr, xi):
        xr, xi = self._pad(xr), self._pad(xi)
        yr = self.real_conv(xr) - self.imag_conv(xi)
        yi = self.imag_conv(xr) + self.real_conv(xi)
        return yr, yi


class ComplexConvTranspose2d(nn.Module):
    """Complex transposed convolution that doubles the frequency axis.

    The transpose of a width-2 time kernel emits one trailing extra frame;
    trimming it keeps the layer causal (output frame t only accumulates
    input frames <= t).
    """

    def __init__(self, in_channels, out_channels, kernel_size=(5, 2), stride=(2, 1)):
        super().__init__()
        self.kernel_size = kernel_size
        freq_pad = (kernel_size[0] - 1) // 2
        # chosen so the frequency axis grows by exactly the stride factor
        out_pad = stride[0] + 2 * freq_pad - kernel_size[0]
        if not 0 <= out_pad < stride[0]:
            raise ValueError(
                f"kernel {kernel_size[0]} incompatible with frequency stride {stride[0]}")
        self.real_conv = nn.ConvTranspose2d(
            in_channels, out_channels, kernel_size, stride,
            padding=(freq_pad, 0), output_padding=(out_pad, 0))
        self.imag_conv = nn.ConvTranspose2d(
            in_channels, out_channels, kernel_size, stride,
            padding=(freq_pad, 0), output_padding=(out_pad, 0))

    def forward(self, xr, xi):
        trim = self.kernel_size[1] - 1
        yr = self.real_conv(xr) - self.imag_conv(xi)
        yi = self.imag_conv(xr) + self.real_conv(xi)
        if trim:
            yr, yi = yr[..., :-trim], yi[..., :-trim]
        return yr, yi


class ComplexLSTM(nn.Module):
    """Unidirectional complex LSTM over (B, T, H) part pairs."""

    def __init__(self, input_size, hidden_size):
        super().__init__()
        self.real_lstm = nn.LSTM(input_size, hidden_size, batch_first=True)
        self.imag_lstm = nn.LSTM(input_size, hidden_size, batch_first=True)

    def forward(self, xr, xi):
        rr, _ = self.real_lstm(xr)
        ii, _ = self.imag_lstm(xi)
        ri, _ = self.imag_lstm(xr)
        ir, _ = self.real_lstm(xi)
        return rr - ii, ri + ir


class ComplexLinear(nn.Module):
    def __init__(self, in_features, out_features):
        super().__init__()
        self.real_linear = nn.Linear(in_features, out_features)
        self.imag_linear = nn.Linear(in_features, out_features)

    def forward(self, xr, xi):
        yr = self.real_linear(xr) - self.imag_linear(xi)
        yi = self.imag_linear(xr) + self.real_linear(xi)
        return yr, yi


class ComplexBlock(nn.Module):
    """Conv (or deconv) followed by per-part batch norm and PReLU."""

    def __init__(self, conv: nn.Module, out_channels: int, activation: bool = True):
        super().__init__()
        self.conv = conv
        self.activation = activation
        if activation:
            self.bn_r = nn.BatchNorm2d(out_channels)
            self.bn_i = nn.BatchNorm2d(out_channels)
            self.prelu_r = nn.PReLU()
            self.prelu_i = nn.PReLU()

    def forward(self, xr, xi):
        yr, yi = self.conv(xr, xi)
        if self.activation:
            yr = self.prelu_r(self.bn_r(yr))
            yi = self.prelu_i(self.bn_i(yi))
        return yr, yi
