"""Random field and coefficient generators shared by the test modules."""

from __future__ import annotations

import numpy as np

from leslie_flow import Grid2D, LeslieCoefficients


def band_limited(grid: Grid2D, rng: np.random.Generator, modes: int = 3, components: tuple = ()) -> np.ndarray:
    """Random real field whose Fourier support is ``|m1|, |m2| <= modes``."""
    n = grid.n
    out = np.zeros((*components, n, n))
    m1 = np.fft.fftfreq(n, 1.0 / n)[:, None]
    m2 = np.fft.rfftfreq(n, 1.0 / n)[None, :]
    support = (np.abs(m1) <= modes) & (m2 <= modes)
    for idx in np.ndindex(*components):
        spec = (rng.standard_normal((n, n // 2 + 1)) + 1j * rng.standard_normal((n, n // 2 + 1))) * support
        out[idx] = np.fft.irfft2(spec, s=(n, n)) * n
    return out


def unit_director(grid: Grid2D, rng: np.random.Generator, modes: int = 2, amplitude: float = 1.0) -> np.ndarray:
    theta = amplitude * band_limited(grid, rng, modes) / 4.0
    return np.stack([np.cos(theta), np.sin(theta)])


def tangent_rate(d: np.ndarray, grid: Grid2D, rng: np.random.Generator, modes: int = 2) -> np.ndarray:
    v = band_limited(grid, rng, modes, (2,)) / 4.0
    return v - np.sum(v * d, axis=0) * d


def positive_density(grid: Grid2D, rng: np.random.Generator, modes: int = 2, spread: float = 0.3) -> np.ndarray:
    f = band_limited(grid, rng, modes)
    return 1.0 + spread * f / np.max(np.abs(f))


def dissipative_coefficients(rng: np.random.Generator, lambda1_zero: bool = False) -> LeslieCoefficients:
    """Random Parodi-consistent coefficients satisfying every dissipativity condition."""
    mu4 = rng.uniform(0.1, 3.0)
    xi = rng.uniform(-0.5 * mu4, 2.0)
    mu1 = rng.choice([0.0, rng.uniform(0.0, 2.0)])
    if lambda1_zero:
        lam1 = lam2 = 0.0
        stretch = rng.uniform(0.0, 2.0)
    else:
        lam1 = -rng.uniform(0.1, 3.0)
        lam2 = rng.uniform(-2.0, 2.0)
        # mu5 + mu6 + lam2^2 / lam1 >= 0, with the boundary case included
        stretch = lam2**2 / -lam1 + rng.choice([0.0, rng.uniform(0.0, 2.0)])
    return LeslieCoefficients(
        mu1=mu1, mu2=0.5 * (lam1 - lam2), mu3=0.5 * (-lam1 - lam2), mu4=mu4,
        mu5=0.5 * (stretch + lam2), mu6=0.5 * (stretch - lam2), xi=xi,
    )


EXAMPLE_COEFFICIENTS = dict(mu1=1.0, mu2=-1.0, mu3=0.0, mu4=2.0, mu5=1.0, mu6=0.0, xi=0.0)
