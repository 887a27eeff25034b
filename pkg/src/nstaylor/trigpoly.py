"""Exact algebra of real trigonometric polynomials on the 2*pi-periodic box.

A :class:`TrigPoly` is a finite sum ``sum_k c_k exp(i k.x)`` over integer
wavevectors ``k`` with Hermitian coefficients (``c_{-k} = conj(c_k)``), so it is
real-valued. Products are exact mode convolutions, which makes this backend
alias-free: it is the reference against which the grid backend is checked.

Coefficients are double precision. After every add/multiply, terms smaller than
``eps_prune`` times the operand scale are dropped to keep support bounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.signal import fftconvolve

from .errors import IncompatibleSourceError, ResolutionError
from .field import GridField, GridSpec, _axis_index

EPS_PRUNE = 1e-14

# Above this many pairwise term products, multiply via dense FFT convolution.
DIRECT_PRODUCT_LIMIT = 40_000

_BIAS = 1 << 20
_SPAN = 1 << 21


def _encode(keys: np.ndarray) -> np.ndarray:
    k = keys.astype(np.int64) + _BIAS
    return (k[:, 0] * _SPAN + k[:, 1]) * _SPAN + k[:, 2]


def _decode(codes: np.ndarray) -> np.ndarray:
    kz = codes % _SPAN
    rest = codes // _SPAN
    ky = rest % _SPAN
    kx = rest // _SPAN
    return np.stack([kx, ky, kz], axis=1) - _BIAS


@dataclass(frozen=True, eq=False)
class TrigPoly:
    """Sparse Fourier sum; ``keys`` is ``(M, 3)`` int, sorted lexicographically."""

    keys: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=np.int64).reshape(-1, 3)
        coeffs = np.asarray(self.coeffs, dtype=np.complex128).reshape(-1)
        if len(keys) != len(coeffs):
            raise ValueError("keys and coeffs differ in length")
        keys.flags.writeable = False
        coeffs.flags.writeable = False
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls) -> TrigPoly:
        return cls(np.zeros((0, 3), np.int64), np.zeros(0, complex))

    @classmethod
    def constant(cls, value: float) -> TrigPoly:
        if value == 0:
            return cls.zero()
        return cls(np.zeros((1, 3), np.int64), np.array([value], complex))

    @classmethod
    def from_terms(cls, terms: Mapping[tuple[int, int, int], complex], complete=False):
        """Build from a ``{(kx, ky, kz): coefficient}`` map.

        With ``complete=True`` the conjugate partner of every listed term is
        added; otherwise the map must already be Hermitian.
        """
        if not terms:
            return cls.zero()
        keys = np.array(list(terms.keys()), dtype=np.int64).reshape(-1, 3)
        coeffs = np.array(list(terms.values()), dtype=complex)
        if complete:
            zero = np.all(keys == 0, axis=1)
            if np.any(np.abs(coeffs[zero].imag) > 0):
                raise ValueError("zero-mode coefficient must be real")
            keys = np.concatenate([keys, -keys[~zero]])
            coeffs = np.concatenate([coeffs, np.conj(coeffs[~zero])])
        poly = _canonical(keys, coeffs, 0.0)
        if not poly.is_hermitian(1e-14):
            raise ValueError("terms are not Hermitian; pass complete=True")
        return poly

    @classmethod
    def cos(cls, k: Sequence[int], amplitude: float = 1.0) -> TrigPoly:
        """``amplitude * cos(k.x)``."""
        k = tuple(int(i) for i in k)
        if k == (0, 0, 0):
            return cls.constant(amplitude)
        return cls.from_terms({k: amplitude / 2}, complete=True)

    @classmethod
    def sin(cls, k: Sequence[int], amplitude: float = 1.0) -> TrigPoly:
        """``amplitude * sin(k.x)``."""
        k = tuple(int(i) for i in k)
        if k == (0, 0, 0):
            return cls.zero()
        return cls.from_terms({k: -0.5j * amplitude}, complete=True)

    @property
    def terms(self) -> dict[tuple[int, int, int], complex]:
        return {tuple(int(i) for i in k): complex(c) for k, c in zip(self.keys, self.coeffs)}

    def __len__(self) -> int:
        return len(self.coeffs)

    def is_zero(self) -> bool:
        return len(self.coeffs) == 0

    def scale_magnitude(self) -> float:
        """Largest coefficient magnitude (0 for the empty sum)."""
        return float(np.max(np.abs(self.coeffs))) if len(self.coeffs) else 0.0

    def l1_norm(self) -> float:
        """Sum of coefficient magnitudes, an upper bound on the max norm."""
        return float(np.sum(np.abs(self.coeffs)))

    def max_wavenumber(self) -> tuple[int, int, int]:
        if self.is_zero():
            return (0, 0, 0)
        return tuple(int(i) for i in np.max(np.abs(self.keys), axis=0))

    def coefficient(self, k: Sequence[int]) -> complex:
        code = _encode(np.asarray(k, dtype=np.int64).reshape(1, 3))[0]
        codes = _encode(self.keys)
        i = np.searchsorted(codes, code)
        if i < len(codes) and codes[i] == code:
            return complex(self.coeffs[i])
        return 0j

    def mean(self) -> float:
        return self.coefficient((0, 0, 0)).real

    def is_hermitian(self, tol: float = 0.0) -> bool:
        if self.is_zero():
            return True
        codes = _encode(self.keys)
        neg = _encode(-self.keys)
        idx = np.searchsorted(codes, neg)
        idx = np.minimum(idx, len(codes) - 1)
        if not np.array_equal(codes[idx], neg):
            return False
        diff = np.abs(self.coeffs[idx] - np.conj(self.coeffs))
        return bool(np.all(diff <= tol * max(self.scale_magnitude(), 1e-300)))

    def __add__(self, other):
        if not isinstance(other, TrigPoly):
            return NotImplemented
        return tp_add(self, other)

    def __sub__(self, other):
        if not isinstance(other, TrigPoly):
            return NotImplemented
        return tp_add(self, tp_scale(other, -1.0))

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return tp_mul(self, other)
        return tp_scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return tp_scale(self, -1.0)

    def __repr__(self):
        return f"TrigPoly({len(self)} terms, max |c|={self.scale_magnitude():.3e})"


def _canonical(keys: np.ndarray, coeffs: np.ndarray, threshold: float) -> TrigPoly:
    """Merge duplicate keys, sort, and drop terms with ``|c| <= threshold``."""
    if len(coeffs) == 0:
        return TrigPoly.zero()
    codes, inverse = np.unique(_encode(keys), return_inverse=True)
    inverse = inverse.reshape(-1)
    re = np.bincount(inverse, weights=coeffs.real, minlength=len(codes))
    im = np.bincount(inverse, weights=coeffs.imag, minlength=len(codes))
    merged = re + 1j * im
    keep = np.abs(merged) > threshold
    return TrigPoly(_decode(codes[keep]), merged[keep])


def _symmetrize(p: TrigPoly, threshold: float) -> TrigPoly:
    """Average each coefficient with the conjugate of its partner."""
    if p.is_zero():
        return p
    keys = np.concatenate([p.keys, -p.keys])
    coeffs = np.concatenate([p.coeffs, np.conj(p.coeffs)]) / 2
    return _canonical(keys, coeffs, threshold)


def tp_add(a: TrigPoly, b: TrigPoly, eps_prune: float = EPS_PRUNE) -> TrigPoly:
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    threshold = eps_prune * max(a.scale_magnitude(), b.scale_magnitude())
    return _canonical(
        np.concatenate([a.keys, b.keys]), np.concatenate([a.coeffs, b.coeffs]), threshold
    )


def tp_sum(polys: Iterable[TrigPoly], eps_prune: float = EPS_PRUNE) -> TrigPoly:
    """Sum of many polynomials with a single merge."""
    polys = [p for p in polys if not p.is_zero()]
    if not polys:
        return TrigPoly.zero()
    if len(polys) == 1:
        return polys[0]
    threshold = eps_prune * max(p.scale_magnitude() for p in polys)
    return _canonical(
        np.concatenate([p.keys for p in polys]),
        np.concatenate([p.coeffs for p in polys]),
        threshold,
    )


def tp_scale(a: TrigPoly, c: float) -> TrigPoly:
    c = float(c)
    if c == 0.0 or a.is_zero():
        return TrigPoly.zero()
    return TrigPoly(a.keys, a.coeffs * c)


def tp_mul(a: TrigPoly, b: TrigPoly, eps_prune: float = EPS_PRUNE) -> TrigPoly:
    """Exact product (mode convolution)."""
    if a.is_zero() or b.is_zero():
        return TrigPoly.zero()
    threshold = eps_prune * a.scale_magnitude() * b.scale_magnitude()
    if len(a) * len(b) <= DIRECT_PRODUCT_LIMIT:
        product = _mul_direct(a, b)
    else:
        product = _mul_dense(a, b)
    return _symmetrize(product, threshold)


def _mul_direct(a: TrigPoly, b: TrigPoly) -> TrigPoly:
    keys = (a.keys[:, None, :] + b.keys[None, :, :]).reshape(-1, 3)
    coeffs = np.outer(a.coeffs, b.coeffs).reshape(-1)
    return _canonical(keys, coeffs, 0.0)


def _to_dense(p: TrigPoly, lo: np.ndarray, shape) -> np.ndarray:
    arr = np.zeros(shape, complex)
    idx = p.keys - lo
    arr[idx[:, 0], idx[:, 1], idx[:, 2]] = p.coeffs
    return arr


def _from_dense(arr: np.ndarray, lo: np.ndarray) -> TrigPoly:
    idx = np.argwhere(arr != 0)
    return _canonical(idx + lo, arr[tuple(idx.T)], 0.0)


def _mul_dense(a: TrigPoly, b: TrigPoly) -> TrigPoly:
    lo_a, hi_a = a.keys.min(axis=0), a.keys.max(axis=0)
    lo_b, hi_b = b.keys.min(axis=0), b.keys.max(axis=0)
    dense = fftconvolve(
        _to_dense(a, lo_a, hi_a - lo_a + 1), _to_dense(b, lo_b, hi_b - lo_b + 1)
    )
    return _from_dense(dense, lo_a + lo_b)


def tp_mul_sum(
    pairs: Sequence[tuple[TrigPoly, TrigPoly]],
    weights: Sequence[float] | None = None,
    eps_prune: float = EPS_PRUNE,
) -> TrigPoly:
    """``sum_k w_k * a_k * b_k`` with products formed exactly."""
    weights = weights if weights is not None else [1.0] * len(pairs)
    return tp_sum(
        (tp_scale(tp_mul(a, b, eps_prune), w) for w, (a, b) in zip(weights, pairs)),
        eps_prune,
    )


def tp_derivative(a: TrigPoly, axis) -> TrigPoly:
    ax = _axis_index(axis)
    if a.is_zero():
        return a
    k = a.keys[:, ax]
    keep = k != 0
    return TrigPoly(a.keys[keep], (1j * k * a.coeffs)[keep])


def tp_laplacian(a: TrigPoly) -> TrigPoly:
    if a.is_zero():
        return a
    ksq = np.sum(a.keys**2, axis=1)
    keep = ksq != 0
    return TrigPoly(a.keys[keep], (-ksq * a.coeffs)[keep])


def tp_poisson_inverse(g: TrigPoly, eps_prune: float = EPS_PRUNE) -> TrigPoly:
    """``p`` with ``tp_laplacian(p) == g`` and zero mean."""
    if g.is_zero():
        return g
    ksq = np.sum(g.keys**2, axis=1)
    zero = ksq == 0
    if np.any(zero):
        c0 = abs(g.coeffs[zero][0])
        if c0 > eps_prune * g.scale_magnitude():
            raise IncompatibleSourceError(f"source has nonzero mean {c0:.3e}")
    keep = ~zero
    return TrigPoly(g.keys[keep], -g.coeffs[keep] / ksq[keep])


def tp_eval(a: TrigPoly, point) -> float | np.ndarray:
    """Value at a point ``(x, y, z)`` or at each row of an ``(P, 3)`` array."""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    out = np.zeros(len(pts))
    if not a.is_zero():
        # chunk over points to bound the phase matrix
        step = max(1, 2_000_000 // max(len(a), 1))
        for s in range(0, len(pts), step):
            phase = pts[s : s + step] @ a.keys.T.astype(float)
            out[s : s + step] = np.real(np.exp(1j * phase) @ a.coeffs)
    return float(out[0]) if single else out


def _check_fits(a: TrigPoly, spec: GridSpec):
    kmax = a.max_wavenumber()
    for k, n, name in zip(kmax, spec.shape, "xyz"):
        if k >= n // 2:
            raise ResolutionError(
                f"wavenumber {k} along {name} needs more than {n} points (Nyquist {n // 2})"
            )


def tp_to_grid(a: TrigPoly, spec: GridSpec) -> GridField:
    """Sample on ``spec``; integer mode ``k`` maps to ``exp(2*pi*i*k.x/L)``."""
    _check_fits(a, spec)
    full = np.zeros(spec.shape, complex)
    if not a.is_zero():
        idx = a.keys % np.array(spec.shape)
        full[idx[:, 0], idx[:, 1], idx[:, 2]] = a.coeffs
    values = np.real(sfft.ifftn(full, norm="forward"))
    return GridField(spec, values)


def tp_from_grid(f: GridField, eps_prune: float = EPS_PRUNE) -> TrigPoly:
    """Modes of a grid field (Nyquist planes discarded, tiny terms pruned)."""
    s = f.spec
    full = sfft.fftn(f.values, norm="forward")
    m = [np.fft.fftfreq(n, 1.0 / n).astype(np.int64) for n in s.shape]
    keep = (
        (np.abs(m[0])[:, None, None] < s.nx // 2)
        & (np.abs(m[1])[None, :, None] < s.ny // 2)
        & (np.abs(m[2])[None, None, :] < s.nz // 2)
    )
    mag = np.abs(full)
    keep &= mag > eps_prune * (mag.max() if mag.size else 0.0)
    idx = np.argwhere(keep)
    keys = np.stack([m[ax][idx[:, ax]] for ax in range(3)], axis=1)
    return _symmetrize(_canonical(keys, full[tuple(idx.T)], 0.0), 0.0)


def sampling_grid(a: TrigPoly, oversample: int = 2, minimum: int = 16) -> GridSpec:
    """A 2*pi grid resolving ``a`` with ``oversample`` points per Nyquist interval."""
    dims = []
    for k in a.max_wavenumber():
        n = max(minimum, oversample * (2 * k + 1))
        dims.append(n + n % 2)
    return GridSpec(*dims)


def tp_max_abs(a: TrigPoly) -> float:
    """Max of ``|a|`` over an oversampled grid (exact at the sampled nodes)."""
    if a.is_zero():
        return 0.0
    return tp_to_grid(a, sampling_grid(a)).max_abs()


def tp_energy_density(a: TrigPoly) -> float:
    """Mean of ``a**2`` over the box, by Parseval."""
    return float(np.sum(np.abs(a.coeffs) ** 2))


def tp_dumps(a: TrigPoly) -> str:
    """One ``kx ky kz re im`` line per term, lexicographic order."""
    return "".join(
        f"{k[0]} {k[1]} {k[2]} {c.real!r} {c.imag!r}\n"
        for k, c in zip(a.keys.tolist(), a.coeffs.tolist())
    )


def tp_loads(text: str) -> TrigPoly:
    keys, coeffs = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 'kx ky kz re im'")
        keys.append([int(p) for p in parts[:3]])
        coeffs.append(complex(float(parts[3]), float(parts[4])))
    if not keys:
        return TrigPoly.zero()
    return _canonical(np.array(keys), np.array(coeffs), 0.0)
