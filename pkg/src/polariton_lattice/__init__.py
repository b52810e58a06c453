"""Rydberg dark-state polaritons on a one-dimensional lattice."""

from .config import PhysicalConfig, RunPlan, validate_config
from .errors import ConfigError, NumericalError, PolaritonError
from .lattice import SpinModel
from .operators import JumpSet
from .variational import ProductState

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "JumpSet",
    "NumericalError",
    "PhysicalConfig",
    "PolaritonError",
    "ProductState",
    "RunPlan",
    "SpinModel",
    "validate_config",
    "__version__",
]
