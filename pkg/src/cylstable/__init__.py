"""Cylindrical fractional Schroedinger operators: spectra, Feynman-Kac Monte Carlo and bound checks."""

__version__ = "0.1.0"

from ._mc import Estimate  # noqa: E402
from .exceptions import ConfigError, InsufficientModesError, NumericalError  # noqa: E402
from .stable_core import Interval, StableParams, levy_constant  # noqa: E402

__all__ = [
    "__version__",
    "Estimate",
    "ConfigError",
    "InsufficientModesError",
    "NumericalError",
    "Interval",
    "StableParams",
    "levy_constant",
]
