"""Synthetic desk-scale audio: parametric "speakers" and colored noise.

Each speaker is a seeded set of vocal parameters (fundamental, band limits,
spectral emphasis peaks). Utterances are sequences of harmonic voiced
segments separated by short pauses, which is enough structure for the toy
embedding to tell speakers apart and for the enhancement models to learn
from. Noise is spectrally tilted white noise with slow amplitude modulation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import PIPELINE_SAMPLE_RATE, Waveform


@dataclass(frozen=True)
class SpeakerVoice:
    speaker_id: str
    f0_hz: float
    emphasis_hz: tuple
    emphasis_width_hz: tuple
    band_hz: tuple  # harmonics confined to [low, high]
    seed: int


def make_speaker(speaker_id: str, seed: int, band_hz: tuple | None = None) -> SpeakerVoice:
    rng = np.random.default_rng(seed)
    f0 = float(rng.uniform(95, 280))
    if band_hz is None:
        band_hz = (f0, 7000.0)
    lo, hi = band_hz
    centers = np.sort(rng.uniform(max(lo, 150.0), hi, size=3))
    widths = rng.uniform(80.0, 400.0, size=3)
    return SpeakerVoice(speaker_id, f0, tuple(centers), tuple(widths), (float(lo), float(hi)), seed)


def _spectral_envelope(voice: SpeakerVoice, freqs: np.ndarray) -> np.ndarray:
    env = np.full_like(freqs, 0.08)
    for c, w in zip(voice.emphasis_hz, voice.emphasis_width_hz):
        env += np.exp(-0.5 * ((freqs - c) / w) ** 2)
    return env


def speaker_utterance(voice: SpeakerVoice, seconds: float, seed: int,
                      sample_rate_hz: int = PIPELINE_SAMPLE_RATE) -> Waveform:
    """Deterministic pseudo-speech: voiced harmonic bursts with pauses."""
    rng = np.random.default_rng(np.random.SeedSequence([voice.seed, seed, 0x5EA]))
    n = int(round(seconds * sample_rate_hz))
    out = np.zeros(n)
    pos = 0
    lo, hi = voice.band_hz
    while pos < n:
        voiced = int(rng.uniform(0.12, 0.35) * sample_rate_hz)
        gap = int(rng.uniform(0.05, 0.15) * sample_rate_hz)
        voiced = min(voiced, n - pos)
        if voiced > 0:
            f0 = voice.f0_hz * 2 ** rng.uniform(-0.2, 0.2)
            t = np.arange(voiced) / sample_rate_hz
            seg = np.zeros(voiced)
            k = max(1, int(np.ceil(lo / f0)))
            while k * f0 <= min(hi, 7600.0):
                freq = k * f0
                amp = _spectral_envelope(voice, np.array([freq]))[0] / np.sqrt(k)
                seg += amp * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
                k += 1
            ramp = min(voiced // 4, int(0.02 * sample_rate_hz)) or 1
            window = np.ones(voiced)
            window[:ramp] = np.linspace(0, 1, ramp)
            window[-ramp:] = np.linspace(1, 0, ramp)
            seg *= window * rng.uniform(0.6, 1.0)
            out[pos:pos + voiced] = seg
        pos += voiced + gap
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.5 / peak
    return Waveform(out, sample_rate_hz)


def noise_waveform(seed: int, seconds: float,
                   sample_rate_hz: int = PIPELINE_SAMPLE_RATE,
                   tilt: float | None = None) -> Waveform:
    """Colored noise: white noise with a 1/f**tilt spectral slope and slow AM."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x0153]))
    n = int(round(seconds * sample_rate_hz))
    white = rng.standard_normal(n)
    if tilt is None:
        tilt = float(rng.uniform(0.2, 1.2))
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, 1 / sample_rate_hz)
    shaping = (1.0 + freqs / 50.0) ** (-tilt / 2)
    # keep the band below ~40 Hz empty, like high-passed real recordings;
    # the analysis front-end drops the DC bin and cannot represent it
    shaping[freqs < 40.0] = 0.0
    colored = np.fft.irfft(spectrum * shaping, n=n)
    rate = rng.uniform(0.3, 2.0)
    phase = rng.uniform(0, 2 * np.pi)
    t = np.arange(n) / sample_rate_hz
    am = 1.0 + 0.4 * np.sin(2 * np.pi * rate * t + phase)
    out = colored * am
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= 0.3 / peak
    return Waveform(out, sample_rate_hz)
