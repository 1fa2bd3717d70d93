"""Finite-dimensional diagnostics for Kato smoothness and wave operators."""
from .errors import (
    ConvergenceError,
    MeshResolutionError,
    ScatterkitError,
    SpectralPoleError,
    ValidationError,
)
from .operator_core import (
    BorelSet,
    HermitianOperator,
    Projection,
    SpectralResolution,
    spectral_decompose,
)

__version__ = "0.1.0"

__all__ = [
    "BorelSet",
    "ConvergenceError",
    "HermitianOperator",
    "MeshResolutionError",
    "Projection",
    "ScatterkitError",
    "SpectralPoleError",
    "SpectralResolution",
    "ValidationError",
    "spectral_decompose",
]
