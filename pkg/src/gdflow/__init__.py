"""Unsupervised anomaly detection for vehicle deceleration profiles.

A dual controlled-differential-equation encoder over spline-interpolated sensor
paths feeds a masked autoregressive flow; windows are scored by a low quantile
of their per-sensor log-likelihoods.
"""

from .config import ConfigError, RunConfig, load_config
from .data import DataError, Profile, RawDrive
from .model import GdflowModel, NumericalError, score_profiles, train
from .tensor import NonFiniteError, Tensor

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "GdflowModel",
    "NonFiniteError",
    "NumericalError",
    "Profile",
    "RawDrive",
    "RunConfig",
    "Tensor",
    "load_config",
    "score_profiles",
    "train",
]
