"""Exact spectrum of the quantum Rabi model from an extended coherent-state expansion."""

from .errors import (
    InvalidCoupling,
    InvalidDetuning,
    NoConvergence,
    NonFinite,
    OutsideValidity,
    RabiError,
    TruncationCapExceeded,
    TruncationTooSmall,
    WindowTooSmall,
)
from .model import EnergyLevel, ModelParams, Parity, Spectrum, validate_params

__version__ = "0.1.0"

__all__ = [
    "EnergyLevel",
    "InvalidCoupling",
    "InvalidDetuning",
    "ModelParams",
    "NoConvergence",
    "NonFinite",
    "OutsideValidity",
    "Parity",
    "RabiError",
    "Spectrum",
    "TruncationCapExceeded",
    "TruncationTooSmall",
    "WindowTooSmall",
    "validate_params",
]
