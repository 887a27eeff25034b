"""Scalar and vector fields on a uniform periodic box.

Fields are stored as real arrays of shape ``(nx, ny, nz)`` indexed ``[ix, iy, iz]``;
the flat x-fastest layout used by the dump format is ``values.ravel(order="F")``.
Spectral coefficients use ``norm="forward"`` so a mode's coefficient is its
amplitude, independent of grid size.

Every spectral operator discards the Nyquist planes of even-sized axes: those
modes cannot be differentiated unambiguously, so they are treated as unresolved.

Order ``n`` Taylor coefficients of data with maximum wavenumber ``k0`` have
support within ``(n + 1) * k0`` per axis. With ``exact_padding`` the whole run is
alias-free when ``(N + 1) * k0 < n_axis / 2`` for the highest order ``N``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, IncompatibleSourceError

TOL_MEAN = 1e-10

AXES = {"x": 0, "y": 1, "z": 2}


class DealiasRule(str, enum.Enum):
    TWO_THIRDS = "two_thirds"
    EXACT_PADDING = "exact_padding"


def _axis_index(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXES[axis]
        except KeyError:
            raise ValueError(f"unknown axis {axis!r}") from None
    if axis not in (0, 1, 2):
        raise ValueError(f"unknown axis {axis!r}")
    return int(axis)


def _padded_size(n: int) -> int:
    m = math.ceil(3 * n / 2)
    return m + (m % 2)


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[0, lx) x [0, ly) x [0, lz)``."""

    nx: int
    ny: int
    nz: int
    lx: float = 2 * math.pi
    ly: float = 2 * math.pi
    lz: float = 2 * math.pi
    dealias_rule: DealiasRule = DealiasRule.TWO_THIRDS

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")
        for name in ("lx", "ly", "lz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        object.__setattr__(self, "dealias_rule", DealiasRule(self.dealias_rule))

    @classmethod
    def cube(cls, n: int, length: float = 2 * math.pi, dealias_rule="two_thirds"):
        return cls(n, n, n, length, length, length, DealiasRule(dealias_rule))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def lengths(self) -> tuple[float, float, float]:
        return (self.lx, self.ly, self.lz)

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def volume(self) -> float:
        return self.lx * self.ly * self.lz

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz // 2 + 1)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """1-D node coordinates along each axis."""
        return tuple(
            np.arange(n) * (length / n) for n, length in zip(self.shape, self.lengths)
        )

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(*self.coordinates(), indexing="ij")

    @cached_property
    def mode_indices(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer mode numbers broadcastable over the rfft layout."""
        mx = np.fft.fftfreq(self.nx, 1.0 / self.nx).astype(np.int64)
        my = np.fft.fftfreq(self.ny, 1.0 / self.ny).astype(np.int64)
        mz = np.arange(self.nz // 2 + 1, dtype=np.int64)
        return mx[:, None, None], my[None, :, None], mz[None, None, :]

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Physical wavenumbers ``2*pi*m/L`` broadcastable over the rfft layout."""
        return tuple(
            m * (2 * math.pi / length)
            for m, length in zip(self.mode_indices, self.lengths)
        )

    @cached_property
    def resolved_mask(self) -> np.ndarray:
        """False on the Nyquist planes."""
        mx, my, mz = self.mode_indices
        return (
            (np.abs(mx) < self.nx // 2)
            & (np.abs(my) < self.ny // 2)
            & (mz < self.nz // 2)
        )

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        mx, my, mz = self.mode_indices
        if self.dealias_rule is DealiasRule.TWO_THIRDS:
            return (
                (3 * np.abs(mx) < self.nx)
                & (3 * np.abs(my) < self.ny)
                & (3 * mz < self.nz)
            )
        return self.resolved_mask

    @cached_property
    def k_squared(self) -> np.ndarray:
        kx, ky, kz = self.wavenumbers
        return kx**2 + ky**2 + kz**2

    @cached_property
    def product_shape(self) -> tuple[int, int, int]:
        """Physical grid on which pointwise products are formed."""
        if self.dealias_rule is DealiasRule.EXACT_PADDING:
            return tuple(_padded_size(n) for n in self.shape)
        return self.shape

    def to_physical_for_products(self, spectrum: np.ndarray) -> np.ndarray:
        """Sample a spectrum on the product grid (padded or dealiased)."""
        spectrum = spectrum * self.dealias_mask
        shape = self.product_shape
        if shape != self.shape:
            spectrum = _resize_spectrum(spectrum, self.shape, shape)
        return sfft.irfftn(spectrum, s=shape, norm="forward")

    def from_product_grid(self, values: np.ndarray) -> np.ndarray:
        """Spectrum on this grid of a product-grid sample, dealias mask applied."""
        spectrum = sfft.rfftn(values, norm="forward")
        if values.shape != self.shape:
            spectrum = _resize_spectrum(spectrum, values.shape, self.shape)
        return spectrum * self.dealias_mask


def _band_slices(n_from: int, n_to: int):
    """Index slices for the positive and negative frequency bands kept in common."""
    half = min(n_from, n_to) // 2
    return (slice(0, half), slice(0, half)), (
        slice(n_from - half + 1, n_from),
        slice(n_to - half + 1, n_to),
    )


def _resize_spectrum(src: np.ndarray, src_shape, dst_shape) -> np.ndarray:
    """Zero-pad or truncate an rfft spectrum to another grid size."""
    dst = np.zeros((dst_shape[0], dst_shape[1], dst_shape[2] // 2 + 1), complex)
    # Nyquist modes of the smaller grid are dropped in both directions.
    kz = min(src_shape[2], dst_shape[2]) // 2
    for sx, dx in _band_slices(src_shape[0], dst_shape[0]):
        for sy, dy in _band_slices(src_shape[1], dst_shape[1]):
            dst[dx, dy, :kz] = src[sx, sy, :kz]
    return dst


@dataclass(frozen=True, eq=False)
class GridField:
    """Real scalar field sampled on a :class:`GridSpec`."""

    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.spec.shape:
            if values.size == self.spec.size and values.ndim == 1:
                values = values.reshape(self.spec.shape, order="F")
            else:
                raise ValueError(
                    f"values of shape {values.shape} do not match grid {self.spec.shape}"
                )
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values = values.copy() if values.flags.writeable else values
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, spec: GridSpec) -> GridField:
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def from_function(cls, spec: GridSpec, func) -> GridField:
        """Sample ``func(x, y, z)`` on the grid nodes."""
        x, y, z = spec.mesh()
        return cls(spec, np.broadcast_to(func(x, y, z), spec.shape))

    @classmethod
    def from_spectrum(cls, spec: GridSpec, spectrum: np.ndarray) -> GridField:
        values = sfft.irfftn(spectrum, s=spec.shape, norm="forward")
        return cls(spec, values)

    @cached_property
    def spectrum(self) -> np.ndarray:
        """rfft coefficients (mode amplitudes)."""
        return sfft.rfftn(self.values, norm="forward")

    def flat_values(self) -> np.ndarray:
        """Values in x-fastest order."""
        return self.values.ravel(order="F")

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def mean(self) -> float:
        return float(np.mean(self.values))

    def _check(self, other: GridField):
        if not isinstance(other, GridField):
            return NotImplemented
        if other.spec != self.spec:
            raise GridMismatchError(f"grid mismatch: {self.spec} vs {other.spec}")
        return None

    def __add__(self, other):
        if (bad := self._check(other)) is not None:
            return bad
        return GridField(self.spec, self.values + other.values)

    def __sub__(self, other):
        if (bad := self._check(other)) is not None:
            return bad
        return GridField(self.spec, self.values - other.values)

    def __mul__(self, c):
        if isinstance(c, GridField):
            return multiply(self, c)
        return GridField(self.spec, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(self.spec, -self.values)

    def __repr__(self):
        return f"GridField({self.spec.shape}, max={self.max_abs():.3e})"


class VectorGridField(NamedTuple):
    x_comp: GridField
    y_comp: GridField
    z_comp: GridField

    @property
    def spec(self) -> GridSpec:
        specs = {c.spec for c in self}
        if len(specs) != 1:
            raise GridMismatchError("vector components live on different grids")
        return self.x_comp.spec

    def max_abs(self) -> float:
        return max(c.max_abs() for c in self)


def derivative(f: GridField, axis) -> GridField:
    """Spectral partial derivative along ``axis`` ('x', 'y', 'z' or 0..2)."""
    a = _axis_index(axis)
    k = f.spec.wavenumbers[a]
    return GridField.from_spectrum(f.spec, 1j * k * f.spectrum * f.spec.resolved_mask)


def laplacian(f: GridField) -> GridField:
    s = f.spec
    return GridField.from_spectrum(s, -s.k_squared * f.spectrum * s.resolved_mask)


def gradient(f: GridField) -> VectorGridField:
    return VectorGridField(*(derivative(f, a) for a in range(3)))


def divergence(v: Sequence[GridField]) -> GridField:
    spec = VectorGridField(*v).spec
    total = sum(
        (1j * spec.wavenumbers[a] * comp.spectrum for a, comp in enumerate(v)),
        np.zeros(spec.spectral_shape, complex),
    )
    return GridField.from_spectrum(spec, total * spec.resolved_mask)


def multiply(f: GridField, g: GridField) -> GridField:
    """Dealiased pointwise product according to the grid's dealias rule."""
    return product_sum([(f, g)])


def product_sum(
    pairs: Sequence[tuple[GridField, GridField]],
    weights: Sequence[float] | None = None,
    physical=None,
    eps_prune: float = 0.0,
) -> GridField:
    """Dealiased ``sum_k w_k * a_k * b_k`` with a single forward transform.

    ``physical`` optionally maps a field to its samples on the product grid;
    callers use it to reuse transforms across many sums. Modes of the result
    smaller than ``eps_prune`` times its largest mode are zeroed.
    """
    if not pairs:
        raise ValueError("product_sum needs at least one pair")
    spec = pairs[0][0].spec
    for a, b in pairs:
        if a.spec != spec or b.spec != spec:
            raise GridMismatchError("product operands live on different grids")
    if physical is None:
        cache: dict[int, np.ndarray] = {}

        def physical(fld):
            key = id(fld)
            if key not in cache:
                cache[key] = spec.to_physical_for_products(fld.spectrum)
            return cache[key]

    acc = np.zeros(spec.product_shape)
    weights = weights if weights is not None else [1.0] * len(pairs)
    for w, (a, b) in zip(weights, pairs):
        if w == 1.0:
            acc += physical(a) * physical(b)
        else:
            acc += w * (physical(a) * physical(b))
    return GridField.from_spectrum(spec, prune_spectrum(spec.from_product_grid(acc), eps_prune))


def prune_spectrum(spectrum: np.ndarray, eps: float, scale: float | None = None) -> np.ndarray:
    """Zero modes with magnitude ``<= eps * scale`` (scale defaults to the max mode)."""
    if eps <= 0:
        return spectrum
    mag = np.abs(spectrum)
    if scale is None:
        scale = float(mag.max()) if mag.size else 0.0
    return np.where(mag > eps * scale, spectrum, 0.0)


def poisson_solve_torus(g: GridField, tol_mean: float = TOL_MEAN) -> GridField:
    """Mean-zero ``p`` with ``laplacian(p) == g`` on the periodic box."""
    scale = g.max_abs()
    mean = g.mean()
    if abs(mean) > tol_mean * scale:
        raise IncompatibleSourceError(
            f"source mean {mean:.3e} exceeds {tol_mean:.1e} x max norm {scale:.3e}"
        )
    s = g.spec
    ksq = s.k_squared.copy()
    ksq[0, 0, 0] = 1.0
    p_hat = -g.spectrum / ksq * s.resolved_mask
    p_hat[0, 0, 0] = 0.0
    return GridField.from_spectrum(s, p_hat)


def energy(v: Sequence[GridField]) -> float:
    """Integral of ``|v|^2`` over the box (exact for band-limited fields).

    Accepts any number of components, so a scalar passed as ``(p,)`` works too.
    """
    spec = v[0].spec
    if any(c.spec != spec for c in v):
        raise GridMismatchError("components live on different grids")
    return float(sum(np.mean(c.values**2) for c in v) * spec.volume)


def sample(f: GridField, points: np.ndarray) -> np.ndarray:
    """Trigonometric interpolant of ``f`` evaluated at arbitrary points."""
    s = f.spec
    full = sfft.fftn(f.values, norm="forward")
    mx = np.fft.fftfreq(s.nx, 1.0 / s.nx)[:, None, None]
    my = np.fft.fftfreq(s.ny, 1.0 / s.ny)[None, :, None]
    mz = np.fft.fftfreq(s.nz, 1.0 / s.nz)[None, None, :]
    keep = (
        (np.abs(mx) < s.nx // 2) & (np.abs(my) < s.ny // 2) & (np.abs(mz) < s.nz // 2)
    )
    mag = np.abs(full)
    if mag.max() > 0:
        keep = keep & (mag > 1e-17 * mag.max())
    idx = np.nonzero(keep)
    coeffs = full[idx]
    k = np.stack(
        [
            np.broadcast_to(m, s.shape)[idx] * (2 * math.pi / length)
            for m, length in zip((mx, my, mz), s.lengths)
        ],
        axis=1,
    )
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.real(np.exp(1j * pts @ k.T) @ coeffs)
