"""WAV file I/O. All pipeline audio is 16-bit PCM mono at 16 kHz."""

from __future__ import annotations

import os

import numpy as np
from scipy.io import wavfile

from .dsp import PIPELINE_SAMPLE_RATE, Waveform

_SCALE = 32767.0


def read_wav(path: str | os.PathLike) -> Waveform:
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise ValueError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype != np.int16:
        raise ValueError(f"{path}: expected 16-bit PCM, got dtype {data.dtype}")
    if rate != PIPELINE_SAMPLE_RATE:
        raise ValueError(f"{path}: expected {PIPELINE_SAMPLE_RATE} Hz, got {rate}")
    return Waveform(data.astype(np.float64) / 32768.0, rate)


def write_wav(path: str | os.PathLike, w: Waveform) -> None:
    if w.sample_rate_hz != PIPELINE_SAMPLE_RATE:
        raise ValueError(f"refusing to write {w.sample_rate_hz} Hz audio")
    pcm = np.clip(np.round(w.samples * _SCALE), -32768, 32767).astype(np.int16)
    wavfile.write(path, w.sample_rate_hz, pcm)
