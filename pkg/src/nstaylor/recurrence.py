"""Order-by-order construction of the time-Taylor coefficients.

Given velocity coefficients of orders ``0..n-1``, order ``n`` is obtained by

1. forming the pressure source ``phi_{n-1}`` from the Cauchy sums of
   velocity-gradient products and the forcing divergence,
2. solving ``laplacian(p_{n-1}) = -phi_{n-1}``,
3. evaluating the momentum bracket (viscous term, forcing, advection sums,
   pressure gradient) and dividing it by ``n``.

The same code runs on either backend: :class:`TrigPolyBackend` (exact mode
algebra) or :class:`GridBackend` (pseudospectral, periodic grid).
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import field as fld
from . import trigpoly as tp
from .errors import DivergenceError, NSTaylorError, OrderError, RecurrenceError
from .field import GridField, GridSpec
from .trigpoly import TrigPoly

log = logging.getLogger(__name__)

TOL_DIV_TRIGPOLY = 1e-12
TOL_DIV_GRID = 1e-9
TOL_DIV0 = 1e-9
# Grid transforms put ~1e-16 relative noise on every mode and each order
# differentiates once, so the grid needs more headroom than the exact backend.
GRID_EPS_PRUNE = 1e-13

Vector = tuple  # three scalar fields of one backend


class TrigPolyBackend:
    """Exact Fourier-sum arithmetic on the 2*pi box."""

    name = "trigpoly"

    def __init__(self, eps_prune: float = tp.EPS_PRUNE, tol_div: float = TOL_DIV_TRIGPOLY):
        self.eps_prune = eps_prune
        self.tol_div = tol_div

    def zero(self) -> TrigPoly:
        return TrigPoly.zero()

    def from_trigpoly(self, a: TrigPoly) -> TrigPoly:
        return a

    def add(self, a, b):
        return tp.tp_add(a, b, self.eps_prune)

    def sum(self, items, prune: bool = True):
        return tp.tp_sum(items, self.eps_prune if prune else 0.0)

    def scale(self, a, c):
        return tp.tp_scale(a, c)

    def derivative(self, a, axis):
        return tp.tp_derivative(a, axis)

    def laplacian(self, a):
        return tp.tp_laplacian(a)

    def poisson(self, g):
        return tp.tp_poisson_inverse(g, self.eps_prune)

    def product_sum(self, pairs, weights=None):
        live = [
            (w, (a, b))
            for w, (a, b) in zip(weights or [1.0] * len(pairs), pairs)
            if not (a.is_zero() or b.is_zero())
        ]
        if not live:
            return TrigPoly.zero()
        w, p = zip(*live)
        return tp.tp_mul_sum(p, w, self.eps_prune)

    def max_abs(self, a) -> float:
        return tp.tp_max_abs(a)

    def mean(self, a) -> float:
        return a.mean()

    def size(self, a) -> int:
        return len(a)

    def describe_size(self, v: Vector) -> str:
        return str(sum(len(c) for c in v))

    def sample(self, a, points) -> np.ndarray:
        return np.atleast_1d(tp.tp_eval(a, np.atleast_2d(points)))

    def energy(self, v: Vector) -> float:
        return sum(tp.tp_energy_density(c) for c in v) * (2 * math.pi) ** 3

    def is_zero(self, a) -> bool:
        return a.is_zero()


class GridBackend:
    """Pseudospectral arithmetic on a periodic :class:`GridSpec`.

    Product-grid samples of fields are cached (up to ``cache_bytes``) so the
    Cauchy sums of later orders reuse the transforms of earlier ones.

    Sums and product sums drop modes below ``eps_prune`` times the operand
    scale, mirroring the trig-polynomial pruning. Without it, transform roundoff
    at high wavenumbers is amplified by one derivative per order.
    """

    name = "grid"

    def __init__(
        self,
        spec: GridSpec,
        tol_div: float = TOL_DIV_GRID,
        tol_mean: float = fld.TOL_MEAN,
        eps_prune: float = GRID_EPS_PRUNE,
        cache_bytes: int = 768 * 2**20,
    ):
        self.spec = spec
        self.tol_div = tol_div
        self.eps_prune = eps_prune
        self.tol_mean = tol_mean
        self.cache_bytes = cache_bytes
        self._cache: dict[int, tuple[GridField, np.ndarray]] = {}
        self._cached_bytes = 0

    def zero(self) -> GridField:
        return GridField.zeros(self.spec)

    def from_trigpoly(self, a: TrigPoly) -> GridField:
        return tp.tp_to_grid(a, self.spec)

    def add(self, a, b):
        return self.sum([a, b])

    def sum(self, items, prune: bool = True):
        items = list(items)
        if not items:
            return self.zero()
        if len(items) == 1:
            return items[0]
        if not prune:
            return GridField(self.spec, np.sum([f.values for f in items], axis=0))
        total = np.sum([f.spectrum for f in items], axis=0)
        scale = max(float(np.max(np.abs(f.spectrum))) for f in items)
        return GridField.from_spectrum(
            self.spec, fld.prune_spectrum(total, self.eps_prune, scale)
        )

    def scale(self, a, c):
        return a * c

    def derivative(self, a, axis):
        return fld.derivative(a, axis)

    def laplacian(self, a):
        return fld.laplacian(a)

    def poisson(self, g):
        return fld.poisson_solve_torus(g, self.tol_mean)

    def _physical(self, f: GridField) -> np.ndarray:
        hit = self._cache.get(id(f))
        if hit is not None and hit[0] is f:
            return hit[1]
        arr = self.spec.to_physical_for_products(f.spectrum)
        if self._cached_bytes + arr.nbytes <= self.cache_bytes:
            self._cache[id(f)] = (f, arr)
            self._cached_bytes += arr.nbytes
        return arr

    def clear_cache(self):
        self._cache.clear()
        self._cached_bytes = 0

    def product_sum(self, pairs, weights=None):
        return fld.product_sum(
            pairs, weights, physical=self._physical, eps_prune=self.eps_prune
        )

    def max_abs(self, a) -> float:
        return a.max_abs()

    def mean(self, a) -> float:
        return a.mean()

    def size(self, a) -> int:
        return a.spec.size

    def describe_size(self, v: Vector) -> str:
        return "x".join(str(n) for n in self.spec.shape)

    def sample(self, a, points) -> np.ndarray:
        return fld.sample(a, points)

    def energy(self, v: Vector) -> float:
        return fld.energy(v)

    def is_zero(self, a) -> bool:
        return not np.any(a.values)


@dataclass
class OrderDiagnostics:
    order: int
    max_norm_u: float
    max_norm_p: float | None
    max_divergence: float
    bracket_divergence: float
    size: str
    wall_time_ms: float

    CSV_FIELDS = (
        "order",
        "max_norm_u",
        "max_norm_p",
        "max_divergence",
        "term_count_or_grid",
        "wall_time_ms",
    )

    def csv_row(self, timing: bool = True) -> list[str]:
        return [
            str(self.order),
            repr(self.max_norm_u),
            "" if self.max_norm_p is None else repr(self.max_norm_p),
            repr(self.max_divergence),
            self.size,
            f"{self.wall_time_ms:.3f}" if timing else "",
        ]


@dataclass
class ForcingSeries:
    """Forcing as a finite polynomial in time; missing orders are zero."""

    terms: list = field(default_factory=list)

    def term(self, i: int) -> Vector | None:
        return self.terms[i] if i < len(self.terms) else None


@dataclass
class TaylorCoefficients:
    """Velocity orders ``0..N`` and pressure orders ``0..N-1``."""

    backend: Any
    nu: float
    velocity: list = field(default_factory=list)
    pressure: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    _gradients: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return len(self.velocity) - 1

    def gradient(self, n: int) -> tuple:
        """``g[c][j] = d(velocity component c of order n)/dx_j``, cached."""
        if n not in self._gradients:
            b = self.backend
            self._gradients[n] = tuple(
                tuple(b.derivative(comp, j) for j in range(3)) for comp in self.velocity[n]
            )
        return self._gradients[n]

    def max_norm_u(self, n: int) -> float:
        return max(self.backend.max_abs(c) for c in self.velocity[n])


@dataclass
class ProblemSpec:
    nu: float
    initial_velocity: Vector
    backend: Any
    n_max: int
    forcing: ForcingSeries = field(default_factory=ForcingSeries)
    tol_div0: float = TOL_DIV0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("viscosity must be nonnegative")
        if self.n_max < 1:
            raise ValueError("n_max must be a positive integer")
        if len(self.initial_velocity) != 3:
            raise ValueError("initial velocity needs three components")


def divergence_of(backend, v: Vector):
    """Unpruned divergence, so diagnostics see the true rounding level."""
    return backend.sum((backend.derivative(c, j) for j, c in enumerate(v)), prune=False)


def _require_orders(coeffs: TaylorCoefficients, n: int):
    if n < 1:
        raise OrderError(f"order index must be >= 1, got {n}")
    if len(coeffs.velocity) < n:
        raise OrderError(f"orders 0..{n - 1} required, have {len(coeffs.velocity)}")


def compute_phi(coeffs: TaylorCoefficients, forcing: ForcingSeries | None, n: int):
    """Pressure source with ``laplacian(p_{n-1}) == -phi_{n-1}``."""
    _require_orders(coeffs, n)
    b = coeffs.backend
    pairs, weights = [], []
    for i in range(n):
        gi, gm = coeffs.gradient(i), coeffs.gradient(n - 1 - i)
        pairs += [(gi[0][0], gm[0][0]), (gi[1][1], gm[1][1]), (gi[2][2], gm[2][2])]
        pairs += [(gi[1][0], gm[0][1]), (gi[2][0], gm[0][2]), (gi[1][2], gm[2][1])]
        weights += [1.0, 1.0, 1.0, 2.0, 2.0, 2.0]
    phi = b.product_sum(pairs, weights)
    f = forcing.term(n - 1) if forcing is not None else None
    if f is not None:
        phi = b.add(phi, b.scale(divergence_of(b, f), -1.0))
    return phi


def solve_pressure(phi, backend):
    """``p`` with ``laplacian(p) == -phi`` (mean-zero gauge)."""
    return backend.poisson(backend.scale(phi, -1.0))


def order_bracket(coeffs: TaylorCoefficients, forcing: ForcingSeries | None, n: int):
    """Momentum bracket of order ``n`` (before the ``1/n`` factor) and ``p_{n-1}``."""
    _require_orders(coeffs, n)
    b = coeffs.backend
    p = solve_pressure(compute_phi(coeffs, forcing, n), b)
    f = forcing.term(n - 1) if forcing is not None else None
    prev = coeffs.velocity[n - 1]
    bracket = []
    for c in range(3):
        pairs = [
            (coeffs.velocity[i][j], coeffs.gradient(n - 1 - i)[c][j])
            for i in range(n)
            for j in range(3)
        ]
        terms = [
            b.scale(b.product_sum(pairs), -1.0),
            b.scale(b.derivative(p, c), -1.0),
        ]
        if coeffs.nu:
            terms.append(b.scale(b.laplacian(prev[c]), coeffs.nu))
        if f is not None:
            terms.append(f[c])
        bracket.append(b.sum(terms))
    return tuple(bracket), p


def advance_order(coeffs: TaylorCoefficients, forcing: ForcingSeries | None, n: int):
    """Compute ``p_{n-1}`` and velocity order ``n`` and append them to ``coeffs``."""
    if len(coeffs.velocity) != n:
        _require_orders(coeffs, n)
        raise OrderError(f"cannot append order {n}: coefficients hold 0..{coeffs.N}")
    start = time.perf_counter()
    b = coeffs.backend
    bracket, p = order_bracket(coeffs, forcing, n)
    bracket_div = b.max_abs(divergence_of(b, bracket))
    u_n = tuple(b.scale(c, 1.0 / n) for c in bracket)
    div_n = b.max_abs(divergence_of(b, u_n))
    if div_n > b.tol_div or bracket_div > b.tol_div:
        raise DivergenceError(n, max(div_n, bracket_div), b.tol_div)
    coeffs.velocity.append(u_n)
    coeffs.pressure.append(p)
    if coeffs.diagnostics:
        coeffs.diagnostics[n - 1].max_norm_p = b.max_abs(p)
    coeffs.diagnostics.append(
        OrderDiagnostics(
            order=n,
            max_norm_u=coeffs.max_norm_u(n),
            max_norm_p=None,
            max_divergence=div_n,
            bracket_divergence=bracket_div,
            size=b.describe_size(u_n),
            wall_time_ms=(time.perf_counter() - start) * 1e3,
        )
    )
    log.debug("order %d: |u|=%.3e div=%.2e", n, coeffs.diagnostics[-1].max_norm_u, div_n)
    return u_n, p


def check_divergence(coeffs: TaylorCoefficients, n: int) -> float:
    """``max |div u_n|``."""
    if not 0 <= n <= coeffs.N:
        raise OrderError(f"order {n} not present (have 0..{coeffs.N})")
    b = coeffs.backend
    return b.max_abs(divergence_of(b, coeffs.velocity[n]))


def start(problem: ProblemSpec) -> TaylorCoefficients:
    """Coefficients holding only the validated initial condition."""
    b = problem.backend
    u0 = tuple(problem.initial_velocity)
    coeffs = TaylorCoefficients(backend=b, nu=problem.nu, velocity=[u0])
    div0 = b.max_abs(divergence_of(b, u0))
    if div0 > problem.tol_div0:
        raise NSTaylorError(
            f"initial velocity is not divergence-free: {div0:.3e} > {problem.tol_div0:.1e}"
        )
    if not math.isfinite(b.energy(u0)):
        raise NSTaylorError("initial velocity has infinite energy")
    coeffs.diagnostics.append(
        OrderDiagnostics(0, coeffs.max_norm_u(0), None, div0, 0.0, b.describe_size(u0), 0.0)
    )
    return coeffs


def run(problem: ProblemSpec) -> TaylorCoefficients:
    """All coefficients through order ``problem.n_max``."""
    coeffs = start(problem)
    try:
        for n in range(1, problem.n_max + 1):
            try:
                advance_order(coeffs, problem.forcing, n)
            except RecurrenceError:
                raise
            except NSTaylorError as exc:
                raise RecurrenceError(n, str(exc)) from exc
    finally:
        if isinstance(problem.backend, GridBackend):
            problem.backend.clear_cache()
    return coeffs
