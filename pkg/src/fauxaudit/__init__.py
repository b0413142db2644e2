"""Gradient-based individual fairness testing with an auxiliary model."""

from .dataset import Dataset
from .errors import (
    ConfigError,
    ContractError,
    DegenerateGradientError,
    DivergenceError,
    FauxError,
    ProvenanceError,
    SingularityError,
    UndefinedMetricError,
)

__version__ = "0.1.0"
