"""Shoebox room acoustics and SNR-controlled mixture synthesis.

Impulse responses come from the classic mirror-image construction: every
virtual source at ``(1 - 2p) * source + 2 r * dims`` (componentwise, p in
{0,1}^3, r integer) contributes a tap at the nearest-sample propagation
delay with amplitude ``prod(wall reflection coefficients) / (4 pi d)``.
Wall absorption ``a`` maps to a pressure reflection coefficient
``sqrt(1 - a)``; absorption 1 leaves only the direct path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .dsp import PIPELINE_SAMPLE_RATE, Waveform

SPEED_OF_SOUND = 343.0
WALL_MARGIN = 0.5       # sources and mic keep this far from every wall
MIN_SOURCE_MIC_DISTANCE = 0.1
MAX_PLACEMENT_ATTEMPTS = 10_000


class PlacementError(ValueError):
    """Raised when a room cannot host the requested speaker geometry."""


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple          # (L, W, H) meters
    absorption: object = 0.5   # scalar or 6 per-wall values (x0, x1, y0, y1, z0, z1)
    max_reflection_order: int = 6
    sample_rate_hz: int = PIPELINE_SAMPLE_RATE
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValueError(f"room dimensions must be three positive values, got {dims}")
        absorption = np.atleast_1d(np.asarray(self.absorption, dtype=np.float64))
        if absorption.size == 1:
            absorption = np.full(6, absorption[0])
        if absorption.size != 6:
            raise ValueError("absorption must be a scalar or six per-wall values")
        if np.any(absorption <= 0) or np.any(absorption > 1):
            raise ValueError("absorption coefficients must lie in (0, 1]")
        if self.max_reflection_order < 0:
            raise ValueError("max_reflection_order must be non-negative")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "absorption", absorption)

    def contains(self, pos) -> bool:
        p = np.asarray(pos, dtype=np.float64)
        return bool(np.all(p > 0) and np.all(p < np.asarray(self.dimensions)))

    def to_dict(self) -> dict:
        return {
            "dimensions": list(self.dimensions),
            "absorption": np.asarray(self.absorption).tolist(),
            "max_reflection_order": self.max_reflection_order,
        }


def image_method_rir(room: RoomSpec, source, mic) -> Waveform:
    """Impulse response between a source and a microphone in a shoebox room."""
    source = np.asarray(source, dtype=np.float64)
    mic = np.asarray(mic, dtype=np.float64)
    if not room.contains(source) or not room.contains(mic):
        raise ValueError("source and microphone must lie strictly inside the room")
    if np.linalg.norm(source - mic) <= MIN_SOURCE_MIC_DISTANCE:
        raise ValueError(
            f"source and microphone closer than {MIN_SOURCE_MIC_DISTANCE} m")

    dims = np.asarray(room.dimensions)
    # reflection coefficients per wall pair: beta[0, i] is the wall through
    # the origin along axis i, beta[1, i] the opposite wall
    beta = np.sqrt(1.0 - room.absorption.reshape(3, 2).T)
    order = room.max_reflection_order
    fs, c = room.sample_rate_hz, room.speed_of_sound

    taps: dict[int, float] = {}
    r_range = range(-order, order + 1)
    for rx in r_range:
        for ry in r_range:
            for rz in r_range:
                r = np.array([rx, ry, rz])
                if np.sum(np.abs(r)) > order:
                    continue
                for px in (0, 1):
                    for py in (0, 1):
                        for pz in (0, 1):
                            p = np.array([px, py, pz])
                            lo_counts = np.abs(r - p)  # hits on the origin-side walls
                            hi_counts = np.abs(r)      # hits on the far walls
                            n_reflections = int(lo_counts.sum() + hi_counts.sum())
                            if n_reflections > order:
                                continue
                            image = (1 - 2 * p) * source + 2 * r * dims
                            d = float(np.linalg.norm(image - mic))
                            if d == 0.0:
                                continue
                            gain = float(
                                np.prod(beta[0] ** lo_counts) * np.prod(beta[1] ** hi_counts)
                            ) / (4 * np.pi * d)
                            if gain == 0.0:
                                continue
                            n = int(round(d / c * fs))
                            taps[n] = taps.get(n, 0.0) + gain
    length = max(taps) + 1
    h = np.zeros(length)
    for n, g in taps.items():
        h[n] = g
    return Waveform(h, fs)


def place_speakers(room: RoomSpec, seed,
                   target_distance_range=(MIN_SOURCE_MIC_DISTANCE, 1.3),
                   min_interferer_distance: float = 2.0):
    """Sample microphone, target, and interferer positions.

    The microphone lands uniformly in the margin-shrunk interior; the target
    at a uniformly drawn distance within ``target_distance_range`` of it; the
    interferer uniformly in the interior but farther than
    ``min_interferer_distance`` from the microphone. Deterministic per seed.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    dims = np.asarray(room.dimensions)
    lo = np.full(3, WALL_MARGIN)
    hi = dims - WALL_MARGIN
    if np.any(hi <= lo):
        raise PlacementError(f"room {tuple(dims)} too small for wall margin {WALL_MARGIN}")
    span = hi - lo
    if np.linalg.norm(span) <= min_interferer_distance:
        raise PlacementError(
            f"room {tuple(dims)} cannot hold an interferer more than "
            f"{min_interferer_distance} m from the microphone")

    mic = rng.uniform(lo, hi)

    d_lo, d_hi = target_distance_range
    target_distance = rng.uniform(d_lo, d_hi)
    target = None
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        direction = rng.standard_normal(3)
        norm = np.linalg.norm(direction)
        if norm == 0:
            continue
        candidate = mic + target_distance * direction / norm
        if np.all(candidate > lo) and np.all(candidate < hi):
            target = candidate
            break
    if target is None:
        raise PlacementError("could not place the target speaker in this room")

    interferer = None
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        candidate = rng.uniform(lo, hi)
        if np.linalg.norm(candidate - mic) > min_interferer_distance:
            interferer = candidate
            break
    if interferer is None:
        raise PlacementError("could not place the interferer far enough from the mic")

    return target, interferer, mic


@dataclass(frozen=True)
class MixtureSpec:
    """Recipe for one simulated sample."""

    scenario: str              # TS1 | TS2 | TS3
    target_speaker_id: str
    interferer_id: str | None = None
    noise_id: str | None = None
    snr_db_range: tuple = (0.0, 20.0)
    sir_db_range: tuple = (0.0, 10.0)
    segment_seconds: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in ("TS1", "TS2", "TS3"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "TS1" and (self.interferer_id is None or self.noise_id is None):
            raise ValueError("TS1 requires an interferer and a noise source")
        if self.scenario == "TS2" and (self.interferer_id is not None or self.noise_id is None):
            raise ValueError("TS2 requires noise and no interferer")
        if self.scenario == "TS3" and (self.interferer_id is not None or self.noise_id is not None):
            raise ValueError("TS3 allows neither interferer nor noise")
        if self.segment_seconds <= 0:
            raise ValueError("segment length must be positive")


@dataclass(frozen=True)
class MixtureSample:
    mixture: Waveform
    target_reverberant: Waveform
    metadata: dict


def _fit_length(x: np.ndarray, n: int) -> np.ndarray:
    if x.size >= n:
        return x[:n]
    reps = int(np.ceil(n / x.size))
    return np.tile(x, reps)[:n]


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x**2)))


def synthesize_mixture(spec: MixtureSpec, room: RoomSpec, target: Waveform,
                       interferer: Waveform | None = None,
                       noise: Waveform | None = None) -> MixtureSample:
    """Convolve, scale, and sum the sources of one scenario.

    The reverberant target is the training/eval reference. The interferer is
    also reverberated (it is a speaker in the room); noise is added dry as a
    diffuse background. Scales realize an SIR/SNR drawn uniformly from the
    spec's ranges, measured against the reverberant target. The final
    mixture and its stored components share one peak-protection gain, so the
    components re-sum to the mixture exactly.
    """
    if (interferer is None) != (spec.interferer_id is None):
        raise ValueError("interferer waveform must be supplied iff the spec names one")
    if (noise is None) != (spec.noise_id is None):
        raise ValueError("noise waveform must be supplied iff the spec names one")

    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x31F]))
    fs = room.sample_rate_hz
    n = int(round(spec.segment_seconds * fs))

    target_pos, interferer_pos, mic_pos = place_speakers(room, rng)

    dry = _fit_length(target.samples, n)
    if _rms(dry) < 1e-7:
        raise ValueError("target source is silent")
    rir_t = image_method_rir(room, target_pos, mic_pos)
    reverb_target = fftconvolve(dry, rir_t.samples)[:n]

    components = {"target_reverberant": reverb_target}
    sir_db = snr_db = None
    if interferer is not None:
        dry_i = _fit_length(interferer.samples, n)
        if _rms(dry_i) < 1e-7:
            raise ValueError("interferer source is silent")
        rir_i = image_method_rir(room, interferer_pos, mic_pos)
        reverb_i = fftconvolve(dry_i, rir_i.samples)[:n]
        sir_db = float(rng.uniform(*spec.sir_db_range))
        scale = _rms(reverb_target) / _rms(reverb_i) * 10 ** (-sir_db / 20)
        components["interferer"] = scale * reverb_i
    if noise is not None:
        dry_n = _fit_length(noise.samples, n)
        if _rms(dry_n) < 1e-7:
            raise ValueError("noise source is silent")
        snr_db = float(rng.uniform(*spec.snr_db_range))
        scale = _rms(reverb_target) / _rms(dry_n) * 10 ** (-snr_db / 20)
        components["noise"] = scale * dry_n

    pre_mix = sum(components.values())
    peak = float(np.max(np.abs(pre_mix)))
    gain = 0.95 / peak if peak > 0.95 else 1.0
    scaled = {k: gain * v for k, v in components.items()}
    mixture = np.zeros(n)
    for v in scaled.values():
        mixture = mixture + v
    assert np.max(np.abs(mixture)) <= 1.0, "peak normalization failed"

    metadata = {
        "scenario": spec.scenario,
        "target_speaker_id": spec.target_speaker_id,
        "interferer_id": spec.interferer_id,
        "noise_id": spec.noise_id,
        "snr_db": snr_db,
        "sir_db": sir_db,
        "gain": gain,
        "seed": spec.seed,
        "segment_seconds": spec.segment_seconds,
        "room": room.to_dict(),
        "positions": {
            "target": target_pos.tolist(),
            "interferer": interferer_pos.tolist() if interferer is not None else None,
            "mic": mic_pos.tolist(),
        },
    }
    return MixtureSample(
        mixture=Waveform(mixture, fs),
        target_reverberant=Waveform(scaled["target_reverberant"], fs),
        metadata=metadata,
    )
