"""Transport and large-deviation toolkit for run-and-tumble particles.

Exact transforms, free energies and rate functions, the occupation-time
variational formula, and Monte Carlo oracles, each checked against the others.
"""
from .model import (
    ContinuumModel,
    DomainError,
    IrreducibilityError,
    JumpKernel,
    LatticeModel,
    ModelError,
    NumericalError,
    OccupationMeasure,
    VelocityChain,
    build_1d_two_state,
    nearest_neighbor_kernel,
    stationary_measure,
)

__version__ = "0.1.0"

__all__ = [
    "ContinuumModel",
    "DomainError",
    "IrreducibilityError",
    "JumpKernel",
    "LatticeModel",
    "ModelError",
    "NumericalError",
    "OccupationMeasure",
    "VelocityChain",
    "build_1d_two_state",
    "nearest_neighbor_kernel",
    "stationary_measure",
]
