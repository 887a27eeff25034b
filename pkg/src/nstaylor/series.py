"""Partial sums, residuals and empirical convergence diagnostics.

Nothing here proves convergence. The radius estimate is an empirical hint
read off a finite number of coefficient norms, and it is labelled that way in
every serialized report.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, OrderError
from .recurrence import TaylorCoefficients, divergence_of

HINT_NOTE = (
    "empirical hint from finitely many coefficients; convergence of the series is not proven"
)


@dataclass
class PartialSum:
    t: float
    M: int
    velocity: tuple
    pressure: object


def _horner(backend, fields: Sequence, t: float):
    # evaluation never prunes: small high orders must still contribute
    acc = fields[-1]
    for f in reversed(fields[:-1]):
        acc = backend.sum([backend.scale(acc, t), f], prune=False)
    return acc


def evaluate_partial_sum(coeffs: TaylorCoefficients, t: float, M: int | None = None) -> PartialSum:
    """``sum_{i<=M} field_i t^i`` for velocity; pressure uses orders ``0..min(M, N-1)``."""
    M = coeffs.N if M is None else M
    if M > coeffs.N:
        raise OrderError(f"M={M} exceeds computed order N={coeffs.N}")
    if M < 0 or t < 0:
        raise ValueError("M and t must be nonnegative")
    b = coeffs.backend
    if t == 0:
        pressure = coeffs.pressure[0] if coeffs.pressure else b.zero()
        return PartialSum(0.0, M, tuple(coeffs.velocity[0]), pressure)
    velocity = tuple(
        _horner(b, [coeffs.velocity[i][c] for i in range(M + 1)], t) for c in range(3)
    )
    p_orders = coeffs.pressure[: min(M, coeffs.N - 1) + 1]
    pressure = _horner(b, p_orders, t) if p_orders else b.zero()
    return PartialSum(float(t), M, velocity, pressure)


def energy(backend, v) -> float:
    """Integral of ``|v|^2`` over the periodic box."""
    return backend.energy(v)


@dataclass
class RadiusEstimate:
    norms: list[tuple[int, float, float | None]]
    ratio_estimates: list[float]
    root_estimates: list[float]
    radius_lower_hint: float | str
    method: str
    norm: str = "max"
    flags: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        hint = self.radius_lower_hint
        return {
            "method": self.method,
            "norm": self.norm,
            "radius_lower_hint": hint if isinstance(hint, str) else float(hint),
            "flags": list(self.flags),
            "note": HINT_NOTE,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["order", "norm_u", "norm_p", "ratio", "root"])
        for i, (n, nu, np_) in enumerate(self.norms):
            ratio = self.ratio_estimates[i] if i < len(self.ratio_estimates) else ""
            root = self.root_estimates[i - 1] if i >= 1 else ""
            w.writerow(
                [n, repr(nu), "" if np_ is None else repr(np_), _fmt(ratio), _fmt(root)]
            )
        return out.getvalue()


def _fmt(x) -> str:
    return x if isinstance(x, str) else repr(float(x))


def coefficient_norms(coeffs: TaylorCoefficients, norm: str = "max") -> list[tuple]:
    """``(n, |u_n|, |p_n|)`` per order; ``"energy"`` uses the square root of the energy."""
    b = coeffs.backend
    rows = []
    for n in range(coeffs.N + 1):
        v = coeffs.velocity[n]
        p = coeffs.pressure[n] if n < len(coeffs.pressure) else None
        if norm == "max":
            nu = max(b.max_abs(c) for c in v)
            np_ = None if p is None else b.max_abs(p)
        elif norm == "energy":
            nu = math.sqrt(b.energy(v))
            np_ = None if p is None else math.sqrt(b.energy((p,)))
        else:
            raise ValueError(f"unknown norm {norm!r}")
        rows.append((n, nu, np_))
    return rows


def estimate_radius(coeffs: TaylorCoefficients, norm: str = "max", method: str = "ratio"):
    return estimate_radius_from_norms(coefficient_norms(coeffs, norm), method, norm)


def estimate_radius_from_norms(
    norms: Sequence[tuple], method: str = "ratio", norm: str = "max"
) -> RadiusEstimate:
    """Ratio/root estimates from per-order norms ``(n, |u_n|, |p_n|)``.

    The hint is ``1 / max(tail estimate)`` over the last half of the estimates,
    or ``"unbounded"`` when the tail ratios decrease and a Domb-Sykes line
    ``r_n ~ a + b/n`` extrapolates them to (nearly) zero.
    """
    if method not in ("ratio", "root"):
        raise ValueError(f"unknown method {method!r}")
    norms = [(int(n), float(u), None if p is None else float(p)) for n, u, p in norms]
    values = np.array([u for _, u, _ in norms])
    if len(values) >= 2 and np.all(values[1:] == 0):
        return RadiusEstimate(
            norms, [0.0] * (len(values) - 1), [0.0] * (len(values) - 1),
            "unbounded", method, norm, ["degenerate: all coefficients beyond order 0 vanish"],
        )
    if np.count_nonzero(values) < 4:
        raise InsufficientDataError("at least 4 orders with nonzero norm are required")
    flags = []
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = values[1:] / values[:-1]
    ratios = np.where(np.isfinite(ratios), ratios, np.inf)
    if np.any(values[:-1] == 0):
        flags.append("zero norm inside the series; affected ratios set to inf")
    orders = np.array([n for n, _, _ in norms], dtype=float)
    roots = values[1:] ** (1.0 / orders[1:])

    tail_from = len(ratios) // 2
    tail = ratios[tail_from:]
    root_tail = roots[tail_from:]
    if method == "ratio":
        hint = _ratio_hint(tail, orders[1:][tail_from:], flags)
    else:
        peak = float(np.max(root_tail))
        hint = "unbounded" if peak == 0 else 1.0 / peak
    flags.append("empirical hint")
    return RadiusEstimate(norms, ratios.tolist(), roots.tolist(), hint, method, norm, flags)


def _ratio_hint(tail: np.ndarray, n: np.ndarray, flags: list) -> float | str:
    if np.any(~np.isfinite(tail)):
        return 1.0 / float(np.max(tail))
    peak = float(np.max(tail))
    if peak == 0:
        return "unbounded"
    decreasing = len(tail) >= 3 and bool(np.all(np.diff(tail) < 0))
    if decreasing:
        slope, intercept = np.polyfit(1.0 / n, tail, 1)
        if intercept <= 0.05 * peak:
            flags.append(f"ratios trend to zero (Domb-Sykes intercept {intercept:.3e})")
            return "unbounded"
    return 1.0 / peak


@dataclass
class Residual:
    momentum: float
    continuity: float


def _series_time_derivative(b, fields, t):
    # d/dt sum f_i t^i = sum i f_i t^(i-1)
    if len(fields) < 2:
        return b.zero()
    return _horner(b, [b.scale(f, i) for i, f in enumerate(fields)][1:], t)


def residual_check(coeffs: TaylorCoefficients, t: float, M: int, sample_points, forcing=None) -> Residual:
    """Pointwise residual of the momentum and continuity equations for the ``M``-term sum.

    The momentum balance at order ``t^k`` pairs ``u_{k+1}`` with ``p_k``, so the
    velocity through order ``M`` is paired with pressure through order ``M-1``;
    the residual of this consistent truncation is exactly ``O(t^M)``.
    """
    if M < 1:
        raise ValueError("residual needs M >= 1")
    if M > coeffs.N:
        raise OrderError(f"M={M} exceeds computed order N={coeffs.N}")
    b = coeffs.backend
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    ps = evaluate_partial_sum(coeffs, t, M)
    pressure = _horner(b, coeffs.pressure[:M], t) if t else coeffs.pressure[0]
    dudt = [
        _series_time_derivative(b, [coeffs.velocity[i][c] for i in range(M + 1)], t)
        for c in range(3)
    ]
    U = [b.sample(c, pts) for c in ps.velocity]
    grad = [[b.sample(b.derivative(c, j), pts) for j in range(3)] for c in ps.velocity]
    gradp = [b.sample(b.derivative(pressure, j), pts) for j in range(3)]
    force = _forcing_at(b, forcing, t, pts)
    momentum = 0.0
    for c in range(3):
        r = b.sample(dudt[c], pts) + sum(U[j] * grad[c][j] for j in range(3)) + gradp[c]
        if coeffs.nu:
            r = r - coeffs.nu * b.sample(b.laplacian(ps.velocity[c]), pts)
        if force is not None:
            r = r - force[c]
        momentum = max(momentum, float(np.max(np.abs(r))))
    continuity = float(np.max(np.abs(b.sample(divergence_of(b, ps.velocity), pts))))
    return Residual(momentum, continuity)


def _forcing_at(b, forcing, t, pts):
    if forcing is None or not forcing.terms:
        return None
    out = []
    for c in range(3):
        comps = [term[c] for term in forcing.terms]
        out.append(b.sample(_horner(b, comps, t) if t else comps[0], pts))
    return out


def fit_residual_order(ts: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of ``log(residual)`` against ``log(t)``."""
    slope, _ = np.polyfit(np.log(ts), np.log(residuals), 1)
    return float(slope)
