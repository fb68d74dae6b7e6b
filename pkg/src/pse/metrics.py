"""Target-speaker over-suppression measure and waveform-level signal metrics.

A frame counts as over-suppressed when the summed squared positive part of
the compressed-magnitude deficit, ``sum_f relu(|S|^p - |S_hat|^p)^2``,
exceeds the fraction ``gamma`` of the frame's compressed reference energy
``sum_f |S|^p``. ``S`` is the clean reference, ``S_hat`` the estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import ComplexSpectrogram, Waveform

SI_SDR_CAP_DB = 60.0


@dataclass(frozen=True)
class MetricParams:
    gamma: float = 0.1
    p: float = 0.3

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.p <= 0:
            raise ValueError(f"compression factor must be positive, got {self.p}")


@dataclass(frozen=True)
class TsosFlags:
    """Per-frame binary over-suppression flags at a given frame rate."""

    flags: np.ndarray
    frame_rate_hz: float

    def __post_init__(self):
        flags = np.asarray(self.flags)
        if flags.ndim != 1 or not np.all(np.isin(flags, (0, 1))):
            raise ValueError("flags must be a 1-D 0/1 sequence")
        if self.frame_rate_hz <= 0:
            raise ValueError("frame rate must be positive")
        object.__setattr__(self, "flags", flags.astype(np.uint8))

    def __len__(self):
        return self.flags.size


@dataclass(frozen=True)
class TsosReport:
    percent_os_frames: float
    total_os_duration_s: float
    max_os_duration_s: float
    gamma: float
    p: float

    def to_dict(self) -> dict:
        return {
            "tsos_percent": self.percent_os_frames,
            "tsos_total_s": self.total_os_duration_s,
            "tsos_max_s": self.max_os_duration_s,
            "gamma": self.gamma,
            "p": self.p,
        }


def _mag_arrays(ref, est):
    if isinstance(ref, ComplexSpectrogram):
        ref_vals, est_vals = ref.values, est.values
    else:
        ref_vals, est_vals = np.asarray(ref), np.asarray(est)
    if ref_vals.shape != est_vals.shape:
        raise ValueError(
            f"shape mismatch: reference {ref_vals.shape} vs estimate {est_vals.shape}"
        )
    return np.abs(ref_vals), np.abs(est_vals)


def tsos_frames(
    ref,
    est,
    params: MetricParams = MetricParams(),
    frame_rate_hz: float | None = None,
) -> TsosFlags:
    """Flag over-suppressed frames given reference and estimated spectrograms.

    The comparison is strict, so a frame whose deficit exactly equals the
    threshold — in particular a silent reference frame, where both sides are
    zero — is not flagged. Only magnitudes enter the computation.
    """
    ref_mag, est_mag = _mag_arrays(ref, est)
    if frame_rate_hz is None:
        if not isinstance(ref, ComplexSpectrogram):
            raise ValueError("frame_rate_hz is required for bare arrays")
        frame_rate_hz = ref.frame_rate_hz
    ref_c = ref_mag**params.p
    est_c = est_mag**params.p
    deficit = np.maximum(ref_c - est_c, 0.0)
    os_per_frame = np.sum(deficit**2, axis=1)
    threshold = params.gamma * np.sum(ref_c, axis=1)
    flags = (os_per_frame > threshold).astype(np.uint8)
    return TsosFlags(flags, frame_rate_hz)


def tsos_report(flags: TsosFlags, params: MetricParams = MetricParams()) -> TsosReport:
    """Aggregate frame flags into percentage, total and longest-run durations."""
    if len(flags) == 0:
        raise ValueError("cannot aggregate empty flags")
    f = flags.flags
    hop_s = 1.0 / flags.frame_rate_hz
    count = int(f.sum())
    longest = run = 0
    for v in f:
        run = run + 1 if v else 0
        longest = max(longest, run)
    return TsosReport(
        percent_os_frames=100.0 * count / f.size,
        total_os_duration_s=count * hop_s,
        max_os_duration_s=longest * hop_s,
        gamma=params.gamma,
        p=params.p,
    )


def si_sdr(reference: Waveform | np.ndarray, estimate: Waveform | np.ndarray) -> float:
    """Scale-invariant signal-to-distortion ratio in dB, capped at 60 dB.

    The estimate is projected onto the reference; the ratio of projected
    energy to residual energy is invariant to rescaling of the estimate.
    """
    ref = reference.samples if isinstance(reference, Waveform) else np.asarray(reference, float)
    est = estimate.samples if isinstance(estimate, Waveform) else np.asarray(estimate, float)
    if ref.shape != est.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.shape}")
    ref_energy = np.sum(ref**2)
    if ref_energy <= 0:
        raise ValueError("reference is silent")
    scale = np.dot(est, ref) / ref_energy
    target = scale * ref
    residual = est - target
    num = np.sum(target**2)
    den = np.sum(residual**2)
    if den == 0 or num / den > 10 ** (SI_SDR_CAP_DB / 10):
        return SI_SDR_CAP_DB
    if num == 0:
        return -SI_SDR_CAP_DB
    return float(np.clip(10 * np.log10(num / den), -SI_SDR_CAP_DB, SI_SDR_CAP_DB))
