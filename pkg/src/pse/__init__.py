"""Personalized speech enhancement toolkit.

Causal conditioned enhancement models, the target-speaker over-suppression
metric, power-law compressed phase-aware losses, and an image-method room
simulator, glued together by a simulate / enroll / train / enhance /
evaluate command-line workflow.
"""

__version__ = "0.1.0"

from .dsp import (
    ComplexMask,
    ComplexSpectrogram,
    StftConfig,
    Waveform,
    apply_complex_mask,
    istft,
    power_compress,
    stft,
)

__all__ = [
    "ComplexMask",
    "ComplexSpectrogram",
    "StftConfig",
    "Waveform",
    "apply_complex_mask",
    "istft",
    "power_compress",
    "stft",
    "__version__",
]
