"""Diffusion-based synthesis of shellac record surface noise.

Thin Python layer over the C++ library. Arrays are float64 numpy arrays.
"""

from ._shellac import (
    DataError,
    Error,
    IoError,
    MalformedWavError,
    Model,
    NumericError,
    UnsupportedCodecError,
    UsageError,
    alpha,
    bark_envelope,
    frame_length,
    median_rms,
    normalize_median_rms,
    pairwise_deviation_std,
    read_wav,
    reverse_coefficients,
    run_cli,
    sigma,
    synth_guide,
    temporal_envelope,
    write_wav,
)

__all__ = [
    "DataError",
    "Error",
    "IoError",
    "MalformedWavError",
    "Model",
    "NumericError",
    "UnsupportedCodecError",
    "UsageError",
    "alpha",
    "bark_envelope",
    "frame_length",
    "median_rms",
    "normalize_median_rms",
    "pairwise_deviation_std",
    "read_wav",
    "reverse_coefficients",
    "run_cli",
    "sigma",
    "synth_guide",
    "temporal_envelope",
    "write_wav",
]
