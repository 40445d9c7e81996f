"""Growth-fragmentation equations, their eigenelements and reduced ODE systems."""

from .grid import Grid
from .model import (
    AssumptionReport,
    ConstraintError,
    DomainError,
    Kernel,
    ModelError,
    Nonlinearity,
    PeriodicControl,
    PeriodicSeries,
    PowerLaw,
    derive_params,
    kernel_moment,
)

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "ConstraintError",
    "DomainError",
    "Grid",
    "Kernel",
    "ModelError",
    "Nonlinearity",
    "PeriodicControl",
    "PeriodicSeries",
    "PowerLaw",
    "derive_params",
    "kernel_moment",
]
