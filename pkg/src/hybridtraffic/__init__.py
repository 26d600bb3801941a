"""Hybrid multi-lane traffic simulation with human and autonomous vehicles."""

from .core import AV, CAR, TRUCK, VehicleClassSpec, VehicleState, optimal_velocity
from .errors import (
    ConfigError,
    DomainError,
    HeadwayViolation,
    HybridTrafficError,
    InvariantViolation,
    OptimizationFailed,
    UndefinedAverage,
)
from .state import HybridState, ModelParams

__version__ = "0.1.0"

__all__ = [
    "AV",
    "CAR",
    "TRUCK",
    "ConfigError",
    "DomainError",
    "HeadwayViolation",
    "HybridState",
    "HybridTrafficError",
    "InvariantViolation",
    "ModelParams",
    "OptimizationFailed",
    "UndefinedAverage",
    "VehicleClassSpec",
    "VehicleState",
    "optimal_velocity",
]
