"""Signal-processing kernels shared by the whole toolkit.

Everything here is deterministic numpy: STFT analysis/synthesis, power-law
magnitude compression, complex-ratio-mask application, and per-bin input
feature normalization. The neural models consume the arrays these functions
produce; the functions themselves carry no learnable state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import check_COLA, get_window

PIPELINE_SAMPLE_RATE = 16000
NORM_EPS = 1e-5


@dataclass(frozen=True)
class Waveform:
    """Mono time-domain signal with its sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = PIPELINE_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {samples.shape}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class StftConfig:
    """Analysis/synthesis parameters.

    The window must satisfy the constant-overlap-add property at the given
    hop so the inverse transform is exact on interior samples. With
    ``drop_dc`` the DC bin is removed from the analysis output (and restored
    as zero on synthesis), leaving ``fft_size // 2`` bins.
    """

    fft_size: int = 512
    window_size: int = 512
    hop_size: int = 256
    window: str = "hann"
    drop_dc: bool = True

    def __post_init__(self):
        if not (0 < self.hop_size <= self.window_size <= self.fft_size):
            raise ValueError(
                "require 0 < hop_size <= window_size <= fft_size, got "
                f"hop={self.hop_size} window={self.window_size} fft={self.fft_size}"
            )
        win = self.window_array()
        if not check_COLA(win, self.window_size, self.window_size - self.hop_size):
            raise ValueError(
                f"window {self.window!r} is not COLA at hop {self.hop_size}"
            )

    def window_array(self) -> np.ndarray:
        return get_window(self.window, self.window_size, fftbins=True)

    @property
    def num_bins(self) -> int:
        full = self.fft_size // 2 + 1
        return full - 1 if self.drop_dc else full

    def frame_rate_hz(self, sample_rate_hz: int) -> float:
        return sample_rate_hz / self.hop_size

    def to_dict(self) -> dict:
        return {
            "fft_size": self.fft_size,
            "window_size": self.window_size,
            "hop_size": self.hop_size,
            "window": self.window,
            "drop_dc": self.drop_dc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StftConfig":
        return cls(**d)


@dataclass(frozen=True)
class ComplexSpectrogram:
    """T x F complex array tied to the STFT configuration that produced it."""

    values: np.ndarray
    config: StftConfig
    sample_rate_hz: int = PIPELINE_SAMPLE_RATE

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2:
            raise ValueError(f"spectrogram must be T x F, got shape {values.shape}")
        if values.size and not np.all(np.isfinite(values)):
            raise ValueError("spectrogram contains non-finite values")
        if values.shape[1] != self.config.num_bins:
            raise ValueError(
                f"bin count {values.shape[1]} does not match config ({self.config.num_bins})"
            )
        object.__setattr__(self, "values", values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_bins(self) -> int:
        return self.values.shape[1]

    @property
    def frame_rate_hz(self) -> float:
        return self.config.frame_rate_hz(self.sample_rate_hz)


@dataclass(frozen=True)
class ComplexMask:
    """Complex ratio mask; multiplies a spectrogram of the same shape."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        if values.ndim != 2:
            raise ValueError(f"mask must be T x F, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("mask contains non-finite values")
        object.__setattr__(self, "values", values)


def _frame_count(num_samples: int, hop: int) -> int:
    return num_samples // hop + 1


def stft(w: Waveform, cfg: StftConfig = StftConfig()) -> ComplexSpectrogram:
    """Short-time Fourier transform with center padding.

    Frame t covers samples ``[t*hop - window//2, t*hop + window - window//2)``
    of the input (zero padded at the edges), giving ``len(w)//hop + 1``
    frames.
    """
    if len(w) == 0:
        raise ValueError("cannot take the STFT of an empty waveform")
    win = cfg.window_array()
    hop = cfg.hop_size
    n_frames = _frame_count(len(w), hop)
    left = cfg.window_size // 2
    total = (n_frames - 1) * hop + cfg.window_size
    x = np.zeros(total, dtype=np.float64)
    x[left:left + len(w)] = w.samples
    idx = np.arange(cfg.window_size)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * win
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    if cfg.drop_dc:
        spec = spec[:, 1:]
    return ComplexSpectrogram(spec, cfg, w.sample_rate_hz)


def istft(spec: ComplexSpectrogram) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`.

    Returns ``(T - 1) * hop`` samples; interior samples of a round trip are
    reconstructed exactly up to floating-point error.
    """
    cfg = spec.config
    values = spec.values
    if cfg.drop_dc:
        dc = np.zeros((values.shape[0], 1), dtype=values.dtype)
        values = np.concatenate([dc, values], axis=1)
    win = cfg.window_array()
    hop = cfg.hop_size
    n_frames = values.shape[0]
    frames = np.fft.irfft(values, n=cfg.fft_size, axis=1)[:, :cfg.window_size]
    total = (n_frames - 1) * hop + cfg.window_size
    y = np.zeros(total, dtype=np.float64)
    wsum = np.zeros(total, dtype=np.float64)
    win_sq = win * win
    for t in range(n_frames):
        start = t * hop
        y[start:start + cfg.window_size] += frames[t] * win
        wsum[start:start + cfg.window_size] += win_sq
    y = y / np.maximum(wsum, 1e-12)
    left = cfg.window_size // 2
    out_len = (n_frames - 1) * hop
    return Waveform(y[left:left + out_len], spec.sample_rate_hz)


def apply_complex_mask(noisy: ComplexSpectrogram, mask: ComplexMask) -> ComplexSpectrogram:
    """Per-bin complex multiplication of a spectrogram by a ratio mask."""
    if noisy.values.shape != mask.values.shape:
        raise ValueError(
            f"mask shape {mask.values.shape} does not match spectrogram {noisy.values.shape}"
        )
    return ComplexSpectrogram(noisy.values * mask.values, noisy.config, noisy.sample_rate_hz)


def power_compress(spec: ComplexSpectrogram | np.ndarray, p: float):
    """Split a spectrogram into compressed magnitudes ``|S|**p`` and phases.

    The phase of a zero bin is defined as 0 so downstream losses stay finite
    at silent bins.
    """
    if p <= 0:
        raise ValueError(f"compression factor must be positive, got {p}")
    values = spec.values if isinstance(spec, ComplexSpectrogram) else np.asarray(spec)
    mags = np.abs(values) ** p
    phases = np.angle(values)
    return mags, phases


@dataclass
class FeatureStats:
    """Running per-bin mean/variance for the real and imaginary channels."""

    mean: np.ndarray   # (2, F)
    var: np.ndarray    # (2, F)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.var = np.asarray(self.var, dtype=np.float64)
        if self.mean.ndim != 2 or self.mean.shape[0] != 2 or self.mean.shape != self.var.shape:
            raise ValueError("stats must be (2, F) arrays of matching shape")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.var))):
            raise ValueError("stats must be finite")
        if np.any(self.var < 0):
            raise ValueError("variance must be non-negative")

    @classmethod
    def identity(cls, num_bins: int) -> "FeatureStats":
        return cls(np.zeros((2, num_bins)), np.ones((2, num_bins)))


def input_feature_norm(
    spec: ComplexSpectrogram,
    stats: FeatureStats,
    training: bool = False,
    momentum: float = 0.1,
) -> np.ndarray:
    """Normalize real/imag channels per frequency bin: ``(x - mu)/sqrt(var + eps)``.

    In inference mode only the frozen running statistics are read, which
    keeps the transform causal. In training mode the running statistics are
    updated in place from the current input before normalizing with the
    batch statistics, mirroring batch-norm semantics.
    """
    x = np.stack([spec.values.real, spec.values.imag], axis=1)  # (T, 2, F)
    if stats.mean.shape[1] != x.shape[2]:
        raise ValueError(
            f"stats cover {stats.mean.shape[1]} bins, spectrogram has {x.shape[2]}"
        )
    if training:
        batch_mean = x.mean(axis=0)
        batch_var = x.var(axis=0)
        stats.mean += momentum * (batch_mean - stats.mean)
        stats.var += momentum * (batch_var - stats.var)
        mean, var = batch_mean, batch_var
    else:
        mean, var = stats.mean, stats.var
    return (x - mean[None]) / np.sqrt(var[None] + NORM_EPS)
