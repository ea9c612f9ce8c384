"""Hybrid-distortion image restoration with disentangled feature representations.

A self-contained numpy implementation: a small reverse-mode autodiff engine,
gain-control (GDN/IGDN) layers, the SVDO orthogonality loss, the multi-phase
restoration network, a distortion synthesizer, training/evaluation loops,
interpretability diagnostics and a command-line interface.
"""

from .config import NetworkConfig, TrainConfig, derive_rng, derive_seed
from .errors import (ConfigError, ConstraintError, DataError, DisentangleError, DomainError, GradCheckError,
                     NumericalError, ShapeError, TrainingError, UsageError)
from .network import FDRNet, count_params
from .tensor import Tensor, no_grad

__version__ = "0.1.0"

__all__ = [
    "NetworkConfig", "TrainConfig", "derive_rng", "derive_seed", "FDRNet", "count_params", "Tensor", "no_grad",
    "ConfigError", "ConstraintError", "DataError", "DisentangleError", "DomainError", "GradCheckError",
    "NumericalError", "ShapeError", "TrainingError", "UsageError", "__version__",
]
