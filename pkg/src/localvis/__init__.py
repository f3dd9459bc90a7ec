"""Local-plasticity visual hierarchy: label-free representation learning
with a detached linear readout."""

from .config import RunConfig, config_hash, paper_preset
from .estimator import LinearProbeClassifier, NearestClassMeanClassifier, PlasticVisNet
from .exceptions import (
    ConfigError,
    FormatError,
    GradientIsolationError,
    InputValidationError,
    LocalVisError,
    NumericalError,
)

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "config_hash",
    "paper_preset",
    "PlasticVisNet",
    "LinearProbeClassifier",
    "NearestClassMeanClassifier",
    "LocalVisError",
    "ConfigError",
    "InputValidationError",
    "FormatError",
    "NumericalError",
    "GradientIsolationError",
]
