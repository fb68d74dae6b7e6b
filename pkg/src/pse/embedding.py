"""Speaker embeddings used to condition the enhancement models.

The provider interface mirrors a pretrained speaker-ID network: it maps one
or more enrollment waveforms to a unit-norm vector. The bundled
:class:`MelStatsProvider` is a deterministic, training-free stand-in that
summarizes each utterance by the temporal mean and spread of its compressed
mel band energies and mixes them through a fixed seeded projection. It is
good enough to separate synthetic desk-scale speakers; swap in a real
encoder of the same dimension for anything stronger.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .dsp import StftConfig, Waveform, stft

DVECTOR_DIM = 128
CACHE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class DVector:
    values: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("d-vector must be 1-D")
        if not np.all(np.isfinite(values)):
            raise ValueError("d-vector must be finite")
        norm = np.linalg.norm(values)
        if abs(norm - 1.0) > 1e-6:
            raise ValueError(f"d-vector must be unit norm, got {norm}")
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return self.values.size

    def cosine(self, other: "DVector") -> float:
        return float(np.dot(self.values, other.values))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("cannot normalize a zero vector")
    return v / norm


class EmbeddingProvider:
    """Deterministic map from enrollment audio to a unit-norm speaker vector."""

    dimension: int = DVECTOR_DIM
    min_total_seconds: float = 0.0

    def embed_utterance(self, w: Waveform) -> np.ndarray:
        raise NotImplementedError

    def extract(self, waveforms: list[Waveform], source_id: str = "") -> DVector:
        if not waveforms:
            raise ValueError("enrollment list is empty")
        total = sum(w.duration_s for w in waveforms)
        if total < self.min_total_seconds:
            raise ValueError(
                f"enrollment too short: {total:.2f} s < {self.min_total_seconds} s"
            )
        vectors = [_unit(self.embed_utterance(w)) for w in waveforms]
        return DVector(_unit(np.mean(vectors, axis=0)), source_id)


def extract_dvector(provider: EmbeddingProvider, enrollment: list[Waveform],
                    source_id: str = "") -> DVector:
    """Unit-norm speaker vector from one or more enrollment utterances.

    Multiple utterances are embedded independently and averaged, then
    re-normalized.
    """
    return provider.extract(enrollment, source_id)


def extract_dvector_from_noisy(provider: EmbeddingProvider, utterance: Waveform,
                               source_id: str = "") -> DVector:
    """Speaker vector taken directly from a (possibly noisy) utterance."""
    return provider.extract([utterance], source_id)


def mel_filterbank(num_bands: int, num_bins: int, sample_rate_hz: int) -> np.ndarray:
    """Triangular mel filters over the rfft bin grid, shape (bands, bins)."""

    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    nyquist = sample_rate_hz / 2
    mel_points = np.linspace(hz_to_mel(0), hz_to_mel(nyquist), num_bands + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.linspace(0, nyquist, num_bins)
    fb = np.zeros((num_bands, num_bins))
    for b in range(num_bands):
        lo, center, hi = hz_points[b], hz_points[b + 1], hz_points[b + 2]
        up = (bin_freqs - lo) / (center - lo)
        down = (hi - bin_freqs) / (hi - center)
        fb[b] = np.maximum(0.0, np.minimum(up, down))
    return fb


class MelStatsProvider(EmbeddingProvider):
    """Toy speaker encoder: compressed mel energy statistics under a fixed
    projection.

    Input is RMS-normalized first, so the embedding is scale invariant. Mel
    energies are power-law compressed (x**0.3) rather than logged: a log
    floor in empty bands swamps the features as soon as noise raises it,
    while the compressed energies degrade gracefully.
    """

    min_total_seconds = 1.0

    def __init__(self, dimension: int = DVECTOR_DIM, num_bands: int = 64,
                 compression: float = 0.3, seed: int = 7):
        self.dimension = dimension
        self.num_bands = num_bands
        self.compression = compression
        self.seed = seed
        self._stft_cfg = StftConfig(drop_dc=False)
        rng = np.random.default_rng(seed)
        feat_dim = 2 * num_bands
        self._projection = rng.standard_normal((dimension, feat_dim)) / np.sqrt(feat_dim)
        self._fb = None

    @property
    def provider_id(self) -> str:
        return (f"mel-stats-d{self.dimension}-b{self.num_bands}"
                f"-c{self.compression}-s{self.seed}")

    def embed_utterance(self, w: Waveform) -> np.ndarray:
        rms = np.sqrt(np.mean(w.samples**2)) if len(w) else 0.0
        if rms < 1e-8:
            raise ValueError("utterance is silent; cannot extract a speaker vector")
        x = Waveform(w.samples / rms, w.sample_rate_hz)
        spec = stft(x, self._stft_cfg)
        if self._fb is None or self._fb.shape[1] != spec.num_bins:
            self._fb = mel_filterbank(self.num_bands, spec.num_bins, w.sample_rate_hz)
        power = np.abs(spec.values) ** 2
        mel = (power @ self._fb.T) ** self.compression
        feats = np.concatenate([mel.mean(axis=0), mel.std(axis=0)])
        return self._projection @ feats


def read_enrollment_manifest(path: str | os.PathLike) -> dict[str, list[str]]:
    """JSON-lines manifest: one {"speaker_id", "wavs"} record per speaker."""
    speakers: dict[str, list[str]] = {}
    base = os.path.dirname(os.fspath(path))
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            sid = record["speaker_id"]
            if sid in speakers:
                raise ValueError(f"duplicate speaker {sid!r} in {path}")
            speakers[sid] = [
                p if os.path.isabs(p) else os.path.join(base, p) for p in record["wavs"]
            ]
    if not speakers:
        raise ValueError(f"enrollment manifest {path} is empty")
    return speakers


def save_dvector_cache(path: str | os.PathLike, vectors: dict[str, DVector],
                       provider: EmbeddingProvider) -> None:
    payload = {
        "format_version": CACHE_FORMAT_VERSION,
        "dimension": provider.dimension,
        "provider": getattr(provider, "provider_id", provider.__class__.__name__),
        "vectors": {sid: dv.values.tolist() for sid, dv in vectors.items()},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_dvector_cache(path: str | os.PathLike) -> dict[str, DVector]:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CACHE_FORMAT_VERSION:
        raise ValueError(f"unsupported d-vector cache version in {path}")
    dim = payload["dimension"]
    out = {}
    for sid, values in payload["vectors"].items():
        if len(values) != dim:
            raise ValueError(f"cached vector for {sid!r} has wrong dimension")
        out[sid] = DVector(np.asarray(values), sid)
    return out
