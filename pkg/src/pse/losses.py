"""Training objectives for the enhancement models.

All losses operate on compressed spectral magnitudes ``|S|**p`` (p = 0.3 by
default) of a clean reference ``S`` and an estimate ``S_hat``:

* amplitude term: ``| |S|^p - |S_hat|^p |^2``
* phase-aware term: ``| |S|^p e^{j phase(S)} - |S_hat|^p e^{j phase(S_hat)} |^2``
* over-suppression term: ``| relu(|S|^p - |S_hat|^p) |^2`` — penalizes only
  bins where the estimate falls short of the reference, i.e. where target
  speech was removed.

The base loss mixes amplitude and phase terms with weight ``alpha``; the
asymmetric variant adds ``beta`` times the over-suppression term. A frozen
back-end turns the distance between its features on enhanced and clean
inputs into an auxiliary multi-task term: gradients flow through the
back-end to the enhancement model but never update the back-end itself.

Functions accept torch tensors (gradients preserved), numpy arrays, or
:class:`~pse.dsp.ComplexSpectrogram` objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .dsp import ComplexSpectrogram

# Floor under |S|^2 inside the toy back-end only; the loss terms themselves
# are exact (silent bins contribute exactly zero, with subgradient 0).
MAG_SQ_EPS = 1e-12


@dataclass(frozen=True)
class LossParams:
    p: float = 0.3
    alpha: float = 0.5
    beta: float = 1.0
    lambda_mt: float = 1.0

    def __post_init__(self):
        if self.p <= 0:
            raise ValueError(f"compression factor must be positive, got {self.p}")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")


ASYM_DEFAULTS = LossParams(alpha=0.9)


@dataclass
class LossBreakdown:
    """Individual terms plus their weighted combination.

    Fields hold torch scalars when the inputs were tensors (so ``total``
    can be backpropagated) and plain floats otherwise.
    """

    amplitude: object
    phase: object
    os_term: object
    mt_term: object
    total: object

    def detach(self) -> "LossBreakdown":
        def _f(x):
            return float(x.detach()) if torch.is_tensor(x) else float(x)

        return LossBreakdown(*(_f(getattr(self, k)) for k in
                               ("amplitude", "phase", "os_term", "mt_term", "total")))

    def to_dict(self) -> dict:
        d = self.detach()
        return {
            "amplitude": d.amplitude,
            "phase": d.phase,
            "os": d.os_term,
            "mt": d.mt_term,
            "total": d.total,
        }


def _as_tensor(x) -> torch.Tensor:
    if torch.is_tensor(x):
        if not torch.is_complex(x):
            raise ValueError("spectrogram tensors must be complex")
        return x
    values = x.values if isinstance(x, ComplexSpectrogram) else np.asarray(x)
    return torch.from_numpy(np.ascontiguousarray(values, dtype=np.complex128))


def _compressed_parts(spec: torch.Tensor, p: float):
    # Exactly-silent bins yield zero compressed magnitude and a zero phasor
    # (the phase(0) = 0 convention) with subgradient 0; the where-guard keeps
    # both branches finite so autograd never produces NaN there.
    re, im = spec.real, spec.imag
    mag_sq = re * re + im * im
    silent = mag_sq == 0
    mag = torch.sqrt(torch.where(silent, torch.ones_like(mag_sq), mag_sq))
    zero = torch.zeros_like(mag)
    mag_p = torch.where(silent, zero, mag**p)
    # |S|^p * e^{j phase}, computed through re/mag <= 1 to avoid overflow
    return mag_p, mag_p * torch.where(silent, zero, re / mag), \
        mag_p * torch.where(silent, zero, im / mag)


def _check_pair(ref: torch.Tensor, est: torch.Tensor):
    if ref.shape != est.shape:
        raise ValueError(f"shape mismatch: reference {tuple(ref.shape)} vs estimate {tuple(est.shape)}")
    if not (torch.isfinite(ref.real).all() and torch.isfinite(est.real).all()
            and torch.isfinite(ref.imag).all() and torch.isfinite(est.imag).all()):
        raise ValueError("loss inputs must be finite")


def plcpa(ref, est, params: LossParams = LossParams()) -> LossBreakdown:
    """Power-law compressed phase-aware loss.

    ``total = alpha * mean(amplitude) + (1 - alpha) * mean(phase)`` over all
    time-frequency bins.
    """
    ref_t, est_t = _as_tensor(ref), _as_tensor(est)
    _check_pair(ref_t, est_t)
    r_mag, r_re, r_im = _compressed_parts(ref_t, params.p)
    e_mag, e_re, e_im = _compressed_parts(est_t, params.p)
    amplitude = ((r_mag - e_mag) ** 2).mean()
    phase = ((r_re - e_re) ** 2 + (r_im - e_im) ** 2).mean()
    zero = amplitude.new_zeros(())
    total = params.alpha * amplitude + (1 - params.alpha) * phase
    bd = LossBreakdown(amplitude, phase, zero, zero, total)
    return bd if torch.is_tensor(ref) or torch.is_tensor(est) else bd.detach()


def plcpa_asym(ref, est, params: LossParams = ASYM_DEFAULTS) -> LossBreakdown:
    """Base loss plus ``beta`` times the asymmetric over-suppression penalty."""
    ref_t, est_t = _as_tensor(ref), _as_tensor(est)
    _check_pair(ref_t, est_t)
    r_mag, r_re, r_im = _compressed_parts(ref_t, params.p)
    e_mag, e_re, e_im = _compressed_parts(est_t, params.p)
    amplitude = ((r_mag - e_mag) ** 2).mean()
    phase = ((r_re - e_re) ** 2 + (r_im - e_im) ** 2).mean()
    os_term = (torch.relu(r_mag - e_mag) ** 2).mean()
    zero = amplitude.new_zeros(())
    total = params.alpha * amplitude + (1 - params.alpha) * phase + params.beta * os_term
    bd = LossBreakdown(amplitude, phase, os_term, zero, total)
    return bd if torch.is_tensor(ref) or torch.is_tensor(est) else bd.detach()


class FrozenBackend:
    """Maps a complex spectrogram (T x F) to a per-frame feature sequence.

    Implementations must hold their parameters fixed; the multi-task loss
    differentiates through :meth:`features` with respect to the input only.
    """

    def features(self, spec: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def parameters(self):
        return iter(())


class ToyConvBackend(FrozenBackend):
    """Fixed, seeded 2-layer causal convolutional feature extractor.

    Operates on log-compressed magnitudes; a stand-in for a pretrained
    recognizer encoder at desk scale.
    """

    def __init__(self, num_bins: int = 256, hidden: int = 64, out_dim: int = 32,
                 kernel: int = 3, seed: int = 11):
        gen = torch.Generator().manual_seed(seed)
        scale1 = (num_bins * kernel) ** -0.5
        scale2 = (hidden * kernel) ** -0.5
        self.w1 = (torch.randn(hidden, num_bins, kernel, generator=gen) * scale1)
        self.b1 = torch.zeros(hidden)
        self.w2 = (torch.randn(out_dim, hidden, kernel, generator=gen) * scale2)
        self.b2 = torch.zeros(out_dim)
        for t in (self.w1, self.b1, self.w2, self.b2):
            t.requires_grad_(False)
        self.kernel = kernel

    def parameters(self):
        return iter((self.w1, self.b1, self.w2, self.b2))

    def features(self, spec: torch.Tensor) -> torch.Tensor:
        if spec.ndim not in (2, 3):
            raise ValueError(f"expected (T, F) or (B, T, F), got shape {tuple(spec.shape)}")
        squeeze = spec.ndim == 2
        if squeeze:
            spec = spec.unsqueeze(0)
        mag = torch.sqrt(spec.real**2 + spec.imag**2 + MAG_SQ_EPS)
        x = torch.log1p(mag).transpose(1, 2)  # (B, F, T)
        dtype = x.dtype
        pad = self.kernel - 1
        h = torch.nn.functional.conv1d(
            torch.nn.functional.pad(x, (pad, 0)), self.w1.to(dtype), self.b1.to(dtype))
        h = torch.tanh(h)
        y = torch.nn.functional.conv1d(
            torch.nn.functional.pad(h, (pad, 0)), self.w2.to(dtype), self.b2.to(dtype))
        y = y.transpose(1, 2)  # (B, T, out_dim)
        return y.squeeze(0) if squeeze else y


def mt_loss(backend: FrozenBackend, enhanced, clean) -> torch.Tensor:
    """Mean squared distance between back-end features of enhanced and clean."""
    enh_t, clean_t = _as_tensor(enhanced), _as_tensor(clean)
    feats_enh = backend.features(enh_t)
    feats_clean = backend.features(clean_t).detach()
    if feats_enh.shape != feats_clean.shape:
        raise ValueError(
            f"backend feature shapes differ: {tuple(feats_enh.shape)} vs {tuple(feats_clean.shape)}"
        )
    out = ((feats_enh - feats_clean) ** 2).mean()
    return out if torch.is_tensor(enhanced) else float(out)


def combined_loss(ref, est, params: LossParams = LossParams(), kind: str = "plcpa",
                  backend: FrozenBackend | None = None) -> LossBreakdown:
    """Configured training loss: base (plain or asymmetric) plus optional MT.

    ``total = base_total + lambda_mt * mt`` when a back-end is supplied.
    """
    if kind == "plcpa":
        bd = plcpa(ref, est, params)
    elif kind == "plcpa_asym":
        bd = plcpa_asym(ref, est, params)
    else:
        raise ValueError(f"unknown loss kind {kind!r}")
    if backend is not None:
        mt = mt_loss(backend, _as_tensor(est), _as_tensor(ref))
        bd = LossBreakdown(bd.amplitude, bd.phase, bd.os_term, mt,
                           bd.total + params.lambda_mt * mt)
        if not (torch.is_tensor(ref) or torch.is_tensor(est)):
            bd = bd.detach()
    return bd
