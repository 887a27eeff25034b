"""Closed-form flows and Poisson pairs used as ground truth.

Only flows with known exact solutions act as oracles:

* 2D Taylor-Green vortex: ``u = (-cos x sin y, sin x cos y, 0) e^{-2 nu t}``,
  ``p = -(cos 2x + cos 2y)/4 e^{-4 nu t}``.
* ABC (Arnold-Beltrami-Childress) flow with unit wavenumber:
  ``u = u_ABC e^{-nu t}``, ``p = -(|u_ABC|^2 - mean)/2 e^{-2 nu t}``.

Both velocities are exponentials in time, so their Taylor coefficients are
``u0 (-r)^n / n!`` with ``r`` the velocity decay rate, and the pressure
coefficients are ``p0 (-2r)^n / n!``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .trigpoly import (
    TrigPoly,
    tp_derivative,
    tp_max_abs,
    tp_mul,
    tp_poisson_inverse,
    tp_scale,
    tp_sum,
)


class FlowKind(str, enum.Enum):
    TAYLOR_GREEN_2D = "taylor_green_2d"
    ABC_BELTRAMI = "abc_beltrami"


@dataclass(frozen=True)
class ExactFlow:
    kind: FlowKind
    nu: float
    abc: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def decay_rate(self) -> float:
        """Velocity decay rate: ``2 nu`` (Taylor-Green) or ``nu`` (ABC)."""
        if self.kind is FlowKind.TAYLOR_GREEN_2D:
            return 2.0 * self.nu
        return self.nu


def taylor_green(nu: float) -> ExactFlow:
    return ExactFlow(FlowKind.TAYLOR_GREEN_2D, float(nu))


def abc_beltrami(nu: float, A: float = 1.0, B: float = 1.0, C: float = 1.0) -> ExactFlow:
    return ExactFlow(FlowKind.ABC_BELTRAMI, float(nu), (float(A), float(B), float(C)))


def initial_velocity(flow: ExactFlow) -> tuple[TrigPoly, TrigPoly, TrigPoly]:
    if flow.kind is FlowKind.TAYLOR_GREEN_2D:
        return (
            -(TrigPoly.cos((1, 0, 0)) * TrigPoly.sin((0, 1, 0))),
            TrigPoly.sin((1, 0, 0)) * TrigPoly.cos((0, 1, 0)),
            TrigPoly.zero(),
        )
    A, B, C = flow.abc
    return (
        TrigPoly.sin((0, 0, 1), A) + TrigPoly.cos((0, 1, 0), C),
        TrigPoly.sin((1, 0, 0), B) + TrigPoly.cos((0, 0, 1), A),
        TrigPoly.sin((0, 1, 0), C) + TrigPoly.cos((1, 0, 0), B),
    )


def initial_pressure(flow: ExactFlow) -> TrigPoly:
    if flow.kind is FlowKind.TAYLOR_GREEN_2D:
        return tp_scale(TrigPoly.cos((2, 0, 0)) + TrigPoly.cos((0, 2, 0)), -0.25)
    u = initial_velocity(flow)
    speed2 = tp_sum(c * c for c in u)
    fluctuation = speed2 - TrigPoly.constant(speed2.mean())
    return tp_scale(fluctuation, -0.5)


def exact_velocity(flow: ExactFlow, t: float) -> tuple[TrigPoly, TrigPoly, TrigPoly]:
    factor = math.exp(-flow.decay_rate * t)
    return tuple(tp_scale(c, factor) for c in initial_velocity(flow))


def exact_pressure(flow: ExactFlow, t: float) -> TrigPoly:
    return tp_scale(initial_pressure(flow), math.exp(-2.0 * flow.decay_rate * t))


def expected_coefficient(flow: ExactFlow, n: int):
    """Order-``n`` Taylor coefficients ``(velocity, pressure)`` of the exact flow."""
    if n < 0:
        raise ValueError("order must be nonnegative")
    r = flow.decay_rate
    cu = (-r) ** n / math.factorial(n)
    cp = (-2.0 * r) ** n / math.factorial(n)
    u = tuple(tp_scale(c, cu) for c in initial_velocity(flow))
    return u, tp_scale(initial_pressure(flow), cp)


def random_solenoidal_field(
    k0: int, seed: int, max_speed: float = 1.0, density: float = 1.0
) -> tuple[TrigPoly, TrigPoly, TrigPoly]:
    """Random divergence-free real field with modes ``|k_i| <= k0``.

    Each retained wavevector gets a complex Gaussian amplitude projected onto the
    plane normal to ``k``; the field is rescaled so its largest sampled velocity
    component magnitude is ``max_speed``.
    """
    rng = np.random.default_rng(seed)
    rng_keys = []
    r = np.arange(-k0, k0 + 1)
    for kx in r:
        for ky in r:
            for kz in r:
                k = (int(kx), int(ky), int(kz))
                # one representative per conjugate pair
                if k > (0, 0, 0) and rng.random() < density:
                    rng_keys.append(k)
    terms = [{}, {}, {}]
    for k in rng_keys:
        a = rng.normal(size=3) + 1j * rng.normal(size=3)
        kv = np.array(k, dtype=float)
        a = a - kv * (kv @ a) / (kv @ kv)
        for c in range(3):
            terms[c][k] = a[c]
    u = tuple(TrigPoly.from_terms(t, complete=True) for t in terms)
    scale = max(tp_max_abs(c) for c in u)
    return tuple(tp_scale(c, max_speed / scale) for c in u)


def pressure_from_velocity_identity(u) -> TrigPoly:
    """Mean-zero ``p`` solving ``laplacian p = -sum_jk d_j u_k d_k u_j``.

    Independent route to ``p0`` used when checking the pressure step.
    """
    src = tp_sum(
        tp_mul(tp_derivative(u[k], j), tp_derivative(u[j], k))
        for j in range(3)
        for k in range(3)
    )
    return tp_poisson_inverse(tp_scale(src, -1.0))


def gaussian_poisson_pair(half_width: float, n_per_axis: int):
    """``p = exp(-r^2)`` and ``phi = (6 - 4 r^2) exp(-r^2)`` with ``-laplacian p = phi``."""
    from .greensfn import FreeSpaceGrid

    if half_width < 6:
        raise ValueError("half-width must be >= 6 so the Gaussian tail is negligible")
    grid = FreeSpaceGrid.zeros(half_width, n_per_axis)
    x, y, z = grid.mesh()
    r2 = x * x + y * y + z * z
    p = np.exp(-r2)
    return (
        FreeSpaceGrid(half_width, n_per_axis, (6.0 - 4.0 * r2) * p),
        FreeSpaceGrid(half_width, n_per_axis, p),
    )
