"""Simulation and drift estimation for Levy-driven MCAR(p) and GrCAR(p) processes."""

from mcarlab.errors import (
    ConfigurationError,
    ConvergenceError,
    GraphDegenerateError,
    InsufficientExcitationError,
    InvalidArgumentError,
    McarError,
    NotStationaryError,
    ResourceError,
)
from mcarlab.grid import Partition, coarsen, power_partition
from mcarlab.levy import JumpSpec, LevyTriplet
from mcarlab.model import GrcarParams, McarParams

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConvergenceError",
    "GraphDegenerateError",
    "GrcarParams",
    "InsufficientExcitationError",
    "InvalidArgumentError",
    "JumpSpec",
    "LevyTriplet",
    "McarError",
    "McarParams",
    "NotStationaryError",
    "Partition",
    "ResourceError",
    "coarsen",
    "power_partition",
]
