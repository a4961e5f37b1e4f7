"""Finite-volume numerics for discrete random displacement models."""

from .errors import (
    ConsistencyError,
    DomainError,
    NumericError,
    PreconditionError,
    RangeError,
    RdmError,
    ResourceError,
)
from .lattice import BoundaryCondition, Box, LatticeOperator, SiteFunction, build_operator

__all__ = [
    "BoundaryCondition",
    "Box",
    "ConsistencyError",
    "DomainError",
    "LatticeOperator",
    "NumericError",
    "PreconditionError",
    "RangeError",
    "RdmError",
    "ResourceError",
    "SiteFunction",
    "build_operator",
]

__version__ = "0.1.0"
