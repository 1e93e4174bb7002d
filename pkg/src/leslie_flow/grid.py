"""Periodic 2-D grid and discrete calculus.

Fields are plain numpy arrays laid out component-first:

* scalar: ``(n, n)``
* vector: ``(2, n, n)``, ``u[i]`` is the i-th component
* tensor: ``(2, 2, n, n)``, ``T[j, i]`` pairs with ``(div T)_i = d_j T[j, i]``

Axis ``-2`` carries ``x1`` and axis ``-1`` carries ``x2``.  Two derivative
schemes share one interface: ``"spectral"`` (exact for band-limited fields)
and ``"centered2"`` (second-order centered differences).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np
import scipy.fft as sfft

SCHEMES = ("spectral", "centered2")
S_MAX = 4


class FieldError(ValueError):
    """Raised for non-finite samples, bad shapes or grid mismatches."""


def fft_workers() -> int:
    """Thread count for FFTs, capped by ``LESLIE_FLOW_THREADS``."""
    raw = os.environ.get("LESLIE_FLOW_THREADS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _rfft2(f: np.ndarray) -> np.ndarray:
    return sfft.rfft2(f, axes=(-2, -1), workers=fft_workers())


def _irfft2(fh: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfft2(fh, s=(n, n), axes=(-2, -1), workers=fft_workers())


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid on the torus ``[0, length)^2`` with ``n`` points per side."""

    n: int
    length: float = 2.0 * math.pi

    def __post_init__(self):
        n = self.n
        if isinstance(n, bool) or int(n) != n:
            raise FieldError(f"grid size must be an integer, got {n!r}")
        n = int(n)
        if n < 8 or n & (n - 1):
            raise FieldError(f"grid size must be a power of two >= 8, got {n}")
        if not (math.isfinite(self.length) and self.length > 0):
            raise FieldError(f"grid length must be positive, got {self.length!r}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "length", float(self.length))

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def cell_area(self) -> float:
        return self.spacing**2

    @property
    def volume(self) -> float:
        return self.length**2

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.spacing
        return tuple(np.meshgrid(x, x, indexing="ij"))

    @cached_property
    def _index_freqs(self) -> tuple[np.ndarray, np.ndarray]:
        # integer wave numbers for axis 0 (full) and axis 1 (half spectrum)
        m1 = np.fft.fftfreq(self.n, d=1.0 / self.n)[:, None]
        m2 = np.fft.rfftfreq(self.n, d=1.0 / self.n)[None, :]
        return m1, m2

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Physical wave numbers ``2*pi*m/L`` broadcastable to the rfft layout."""
        m1, m2 = self._index_freqs
        scale = 2.0 * math.pi / self.length
        return m1 * scale, m2 * scale

    @cached_property
    def odd_wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Wave numbers with the Nyquist entry zeroed, used for odd derivatives."""
        k1, k2 = (k.copy() for k in self.wavenumbers)
        nyq = self.n // 2
        k1[nyq, 0] = 0.0
        k2[0, nyq] = 0.0
        return k1, k2

    @cached_property
    def wavenumber_norm(self) -> np.ndarray:
        """Euclidean norm ``|xi|`` of every retained rfft mode."""
        m1, m2 = self._index_freqs
        return (2.0 * math.pi / self.length) * np.sqrt(np.abs(m1) ** 2 + m2**2)

    def symbol(self, axis: int, order: int, scheme: str = "spectral") -> np.ndarray:
        """Fourier symbol of ``d_axis^order`` for the given scheme."""
        _check_scheme(scheme)
        if order == 0:
            return np.ones(1)
        if scheme == "spectral":
            k = (self.odd_wavenumbers if order % 2 else self.wavenumbers)[axis]
        else:
            k = np.sin(self.wavenumbers[axis] * self.spacing) / self.spacing
        return (1j * k) ** order

    def seminorm_symbol(self, k: int, scheme: str = "spectral") -> np.ndarray:
        """``sum_m C(k, m) |symbol of d_1^(k-m) d_2^m|^2`` on the rfft layout."""
        key = (k, scheme)
        cache = self.__dict__.setdefault("_seminorm_cache", {})
        if key not in cache:
            total = np.zeros((self.n, self.n // 2 + 1))
            for m in range(k + 1):
                sym = self.symbol(0, k - m, scheme) * self.symbol(1, m, scheme)
                total = total + math.comb(k, m) * np.abs(sym) ** 2
            cache[key] = total
        return cache[key]

    @cached_property
    def rfft_multiplicity(self) -> np.ndarray:
        """How often each rfft column appears in the full spectrum."""
        mult = np.full((1, self.n // 2 + 1), 2.0)
        mult[0, 0] = mult[0, -1] = 1.0
        return mult

    def zeros(self, *components: int) -> np.ndarray:
        return np.zeros((*components, self.n, self.n))

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(f) * self.cell_area)


def _check_scheme(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise FieldError(f"unknown derivative scheme {scheme!r}; expected one of {SCHEMES}")


def check_field(grid: Grid2D, f: np.ndarray, name: str = "field") -> np.ndarray:
    """Validate shape and finiteness; return ``f`` as a float array."""
    f = np.asarray(f, dtype=float)
    if f.ndim < 2 or f.shape[-2:] != (grid.n, grid.n):
        raise FieldError(f"{name} has shape {f.shape}, incompatible with an {grid.n}x{grid.n} grid")
    if f.ndim > 4 or any(c != 2 for c in f.shape[:-2]):
        raise FieldError(f"{name} has shape {f.shape}; expected scalar, vector or 2x2 tensor")
    bad = ~np.isfinite(f)
    if bad.any():
        raise FieldError(f"{name} has {int(bad.sum())} non-finite samples")
    return f


def gradient(grid: Grid2D, f: np.ndarray, scheme: str = "spectral") -> np.ndarray:
    """``out[j, ...] = d_j f[...]``: vector for scalar input, tensor for vector input."""
    _check_scheme(scheme)
    f = check_field(grid, f)
    if f.ndim > 3:
        raise FieldError("gradient of a tensor field is not supported")
    if scheme == "centered2":
        h2 = 2.0 * grid.spacing
        return np.stack(
            [(np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / h2 for ax in (-2, -1)]
        )
    k1, k2 = grid.odd_wavenumbers
    fh = _rfft2(f)
    return _irfft2(np.stack([1j * k1 * fh, 1j * k2 * fh]), grid.n)


def divergence(grid: Grid2D, T: np.ndarray, scheme: str = "spectral") -> np.ndarray:
    """Contract the first index: ``d_j u_j`` for vectors, ``d_j T[j, i]`` for tensors."""
    _check_scheme(scheme)
    T = check_field(grid, T)
    if T.ndim < 3:
        raise FieldError("divergence needs a vector or tensor field")
    if scheme == "centered2":
        h2 = 2.0 * grid.spacing
        return sum(
            (np.roll(T[j], -1, axis=ax) - np.roll(T[j], 1, axis=ax)) / h2
            for j, ax in enumerate((-2, -1))
        )
    k1, k2 = grid.odd_wavenumbers
    Th = _rfft2(T)
    return _irfft2(1j * k1 * Th[0] + 1j * k2 * Th[1], grid.n)


def laplacian(grid: Grid2D, f: np.ndarray, scheme: str = "spectral") -> np.ndarray:
    """Componentwise Laplacian (compact five-point stencil for ``centered2``)."""
    _check_scheme(scheme)
    f = check_field(grid, f)
    if scheme == "centered2":
        h = grid.spacing
        out = -4.0 * f
        for ax in (-2, -1):
            out = out + np.roll(f, 1, axis=ax) + np.roll(f, -1, axis=ax)
        return out / h**2
    k1, k2 = grid.wavenumbers
    return _irfft2(-(k1**2 + k2**2) * _rfft2(f), grid.n)


def partial(grid: Grid2D, f: np.ndarray, order1: int, order2: int, scheme: str = "spectral") -> np.ndarray:
    """Mixed derivative ``d_1^order1 d_2^order2 f``."""
    f = check_field(grid, f)
    if order1 == order2 == 0:
        return f.copy()
    sym = grid.symbol(0, order1, scheme) * grid.symbol(1, order2, scheme)
    return _irfft2(sym * _rfft2(f), grid.n)


def iter_partials(grid: Grid2D, f: np.ndarray, k: int, scheme: str = "spectral") -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(multiplicity, d_1^(k-m) d_2^m f)`` for ``m = 0..k``.

    Summing ``multiplicity * |.|^2`` over the yielded arrays gives the sum of
    squares of all k-th order partials counted with repetition.
    """
    f = check_field(grid, f)
    if k == 0:
        yield 1, f
        return
    fh = _rfft2(f)
    for m in range(k + 1):
        sym = grid.symbol(0, k - m, scheme) * grid.symbol(1, m, scheme)
        yield math.comb(k, m), _irfft2(sym * fh, grid.n)


def _reduce_components(f: np.ndarray) -> np.ndarray:
    return f.reshape(-1, *f.shape[-2:]).sum(axis=0) if f.ndim > 2 else f


def inner_product(grid: Grid2D, f: np.ndarray, g: np.ndarray, weight: np.ndarray | None = None) -> float:
    """Discrete ``integral of w f.g`` (components contracted)."""
    f = check_field(grid, f, "f")
    g = check_field(grid, g, "g")
    if f.shape != g.shape:
        raise FieldError(f"inner product of mismatched fields {f.shape} and {g.shape}")
    integrand = _reduce_components(f * g)
    if weight is not None:
        integrand = integrand * check_field(grid, weight, "weight")
    return grid.integrate(integrand)


def seminorm_sq(grid: Grid2D, f: np.ndarray, k: int, weight: np.ndarray | None = None,
                scheme: str = "spectral") -> float:
    """``integral of w |grad^k f|^2`` with all k-th partials counted with repetition."""
    if weight is None:
        # Parseval: no inverse transforms needed
        fh = _rfft2(check_field(grid, f))
        power = _reduce_components(fh.real**2 + fh.imag**2)
        dens = grid.rfft_multiplicity * grid.seminorm_symbol(k, scheme) * power
        return float(np.sum(dens)) * grid.cell_area / grid.n**2
    w = check_field(grid, weight, "weight")
    total = 0.0
    for mult, p in iter_partials(grid, f, k, scheme):
        sq = _reduce_components(p * p)
        total += mult * grid.integrate(sq if w is None else w * sq)
    return total


def sobolev_norm(grid: Grid2D, f: np.ndarray, s: int, weight: np.ndarray | None = None,
                 homogeneous: bool = False, scheme: str = "spectral") -> float:
    """Weighted Sobolev norm ``(sum_{k=k0}^{s} int w |grad^k f|^2)^(1/2)``.

    ``k0`` is 1 for the homogeneous norm and 0 otherwise.
    """
    if isinstance(s, bool) or int(s) != s or not 0 <= s <= S_MAX:
        raise FieldError(f"Sobolev order must be an integer in [0, {S_MAX}], got {s!r}")
    if weight is not None:
        weight = check_field(grid, weight, "weight")
        if weight.ndim != 2:
            raise FieldError("weight must be a scalar field")
        if not (weight > 0).all():
            raise FieldError("Sobolev weight must be strictly positive")
    k0 = 1 if homogeneous else 0
    return math.sqrt(sum(seminorm_sq(grid, f, k, weight, scheme) for k in range(k0, int(s) + 1)))


@dataclass(frozen=True)
class SpectralTruncation:
    """Sharp Fourier cutoff keeping modes with ``|xi| <= 1/epsilon``."""

    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon > 0):
            raise FieldError(f"mollifier epsilon must be positive, got {self.epsilon!r}")

    @property
    def cutoff(self) -> float:
        return 1.0 / self.epsilon

    def mask(self, grid: Grid2D) -> np.ndarray:
        return grid.wavenumber_norm <= self.cutoff


def mollify(grid: Grid2D, f: np.ndarray, trunc: SpectralTruncation | float) -> np.ndarray:
    """Project ``f`` onto Fourier modes with ``|xi| <= 1/epsilon``."""
    if not isinstance(trunc, SpectralTruncation):
        trunc = SpectralTruncation(float(trunc))
    f = check_field(grid, f)
    mask = trunc.mask(grid)
    if mask.all():
        # cutoff above every resolved mode
        return f.copy()
    return _irfft2(mask * _rfft2(f), grid.n)
