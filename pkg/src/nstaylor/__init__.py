"""Time-Taylor-series coefficients for the incompressible Navier-Stokes equations.

The velocity and pressure are expanded as power series in time, and each
coefficient field is obtained from the lower orders by a pressure Poisson solve
and an explicit momentum update. Two interchangeable backends evaluate the
spatial algebra: exact trigonometric polynomials and a pseudospectral grid.
"""

from .errors import (
    ConfigError,
    DivergenceError,
    GridMismatchError,
    IncompatibleSourceError,
    InsufficientDataError,
    NSTaylorError,
    OrderError,
    RecurrenceError,
    ResolutionError,
)
from .field import GridField, GridSpec
from .recurrence import GridBackend, ProblemSpec, TaylorCoefficients, TrigPolyBackend, run
from .series import estimate_radius, evaluate_partial_sum, residual_check
from .trigpoly import TrigPoly

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DivergenceError",
    "GridBackend",
    "GridField",
    "GridMismatchError",
    "GridSpec",
    "IncompatibleSourceError",
    "InsufficientDataError",
    "NSTaylorError",
    "OrderError",
    "ProblemSpec",
    "RecurrenceError",
    "ResolutionError",
    "TaylorCoefficients",
    "TrigPoly",
    "TrigPolyBackend",
    "estimate_radius",
    "evaluate_partial_sum",
    "residual_check",
    "run",
]
