"""Joint spectral shaping of photon pairs from multi-stage nonlinear interferometers."""
from __future__ import annotations

__version__ = "0.1.0"

from .physics import (
    FiberSegment,
    InterferometerSpec,
    PumpPulse,
    SpecValidationError,
    SpectralGrid,
    validate_spec,
)
from .engine import (
    JointSpectrum,
    Normalization,
    UnsupportedConfigurationError,
    binomial_lengths,
    interference_factor_even,
    interference_factor_uneven,
    synthesize_jsa,
)
from .analysis import find_islands, jsi, marginal, schmidt_analysis, visibility

__all__ = [
    "FiberSegment", "InterferometerSpec", "PumpPulse", "SpecValidationError", "SpectralGrid",
    "validate_spec", "JointSpectrum", "Normalization", "UnsupportedConfigurationError",
    "binomial_lengths", "interference_factor_even", "interference_factor_uneven",
    "synthesize_jsa", "find_islands", "jsi", "marginal", "schmidt_analysis", "visibility",
]
