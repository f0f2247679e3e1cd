"""Differentiable shallow-water surrogate and topography inversion."""

from .errors import (
    ConfigError, DomainError, DryingError, FormatError, InstabilityError, NonFiniteError, ShapeError, SweError,
)
from .finn import FinnParams, finn_rollout, rollout_values
from .inversion import InverseConfig, infer_topography, reconstruction_error
from .swe import Grid, SimConfig, reference_rollout
from .training import TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DomainError", "DryingError", "FormatError", "InstabilityError", "NonFiniteError",
    "ShapeError", "SweError", "FinnParams", "finn_rollout", "rollout_values", "InverseConfig",
    "infer_topography", "reconstruction_error", "Grid", "SimConfig", "reference_rollout",
    "TrainConfig", "evaluate", "train",
]
