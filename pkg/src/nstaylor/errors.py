"""Exception types raised across the package."""


class NSTaylorError(Exception):
    """Base class for all package errors."""


class IncompatibleSourceError(NSTaylorError, ValueError):
    """Poisson source has a nonzero mean on a periodic domain."""


class ResolutionError(NSTaylorError, ValueError):
    """A field's mode support does not fit the requested grid."""


class GridMismatchError(NSTaylorError, ValueError):
    """Operands live on different grids."""


class RecurrenceError(NSTaylorError):
    """The recurrence failed while computing a specific order."""

    def __init__(self, order: int, message: str):
        self.order = order
        super().__init__(f"order {order}: {message}")


class DivergenceError(RecurrenceError):
    """A freshly computed Taylor order violates the divergence constraint."""

    def __init__(self, order: int, value: float, tol: float):
        self.value = value
        self.tol = tol
        super().__init__(order, f"max divergence {value:.3e} exceeds tolerance {tol:.1e}")


class OrderError(NSTaylorError, ValueError):
    """Requested Taylor order is not available or invalid."""


class InsufficientDataError(NSTaylorError, ValueError):
    """Too few usable coefficient norms for a radius estimate."""


class ConfigError(NSTaylorError, ValueError):
    """Malformed or schema-violating run configuration."""
