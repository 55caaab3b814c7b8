"""Continuous-time economic dispatch with piecewise-affine price trajectories."""
from .errors import (CapacityShortfall, DispatchError, InfeasibleDispatch, MaxIterationsExceeded,
                     ParseError, ValidationError)
from .model import LoadProfile, System, Unit, load_system, save_system

__all__ = [
    "CapacityShortfall", "DispatchError", "InfeasibleDispatch", "LoadProfile",
    "MaxIterationsExceeded", "ParseError", "System", "Unit", "ValidationError",
    "load_system", "save_system",
]
