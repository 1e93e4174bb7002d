"""Leslie coefficients, constitutive tensors and right-hand sides.

Index conventions follow the stress convention ``(div sigma)_i = d_j sigma_ji``:
a tensor array ``T`` stores ``T[j, i] = T_ji``.  For the flow tensors,
``A[i, j] = A_ij = (d_j u_i + d_i u_j) / 2`` and
``B[i, j] = B_ij = (d_j u_i - d_i u_j) / 2``, and the rotation acting on the
director is ``(B d)_i = B_ki d_k``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .grid import FieldError, Grid2D, check_field, divergence, gradient, laplacian

_TOL = 1e-12


class CoefficientError(ValueError):
    """Raised when a coefficient set violates a structural relation."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class VacuumError(ValueError):
    """Raised when the density touches or drops below the vacuum floor."""


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _TOL * max(1.0, abs(a), abs(b))


@dataclass(frozen=True)
class LeslieCoefficients:
    """Leslie viscosities plus the gamma-law pressure constants.

    ``lambda1 = mu2 - mu3`` and ``lambda2 = mu5 - mu6`` are derived, and
    Parodi's relation ``mu2 + mu3 = mu6 - mu5`` is enforced on construction.
    Use :func:`validate` to also check the pressure constants and to
    cross-check explicitly supplied lambdas.
    """

    mu1: float = 0.0
    mu2: float = 0.0
    mu3: float = 0.0
    mu4: float = 1.0
    mu5: float = 0.0
    mu6: float = 0.0
    xi: float = 0.0
    a: float = 1.5
    gamma: float = 2.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise CoefficientError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if not _close(self.mu2 + self.mu3, self.mu6 - self.mu5):
            raise CoefficientError(
                "Parodi relation mu2 + mu3 = mu6 - mu5 violated: "
                f"{self.mu2 + self.mu3:g} != {self.mu6 - self.mu5:g}"
            )

    @property
    def lambda1(self) -> float:
        return self.mu2 - self.mu3

    @property
    def lambda2(self) -> float:
        return self.mu5 - self.mu6

    @property
    def lambda_ratio(self) -> float:
        """``lambda2 / lambda1``, taken as 0 in the admissible case lambda1 = lambda2 = 0."""
        if self.lambda1 == 0.0:
            return 0.0
        return self.lambda2 / self.lambda1

    @property
    def reduced_stretch(self) -> float:
        """``mu5 + mu6 + lambda2**2 / lambda1`` (``mu5 + mu6`` when lambda1 = 0).

        Roundoff within the coefficient tolerance of zero is returned as 0.
        """
        value = self.mu5 + self.mu6 + self.lambda2 * self.lambda_ratio
        return 0.0 if abs(value) <= _TOL * max(1.0, abs(self.mu5) + abs(self.mu6)) else value

    def parodi_ok(self) -> bool:
        return _close(self.mu2 + self.mu3, self.mu6 - self.mu5)

    def dissipative(self) -> bool:
        if self.mu1 < -_TOL or self.mu4 <= 0 or 0.5 * self.mu4 + self.xi < -_TOL:
            return False
        if self.lambda1 > 0:
            return False
        if self.lambda1 == 0.0 and abs(self.lambda2) > _TOL:
            return False
        return self.reduced_stretch >= 0.0

    def strictly_damped(self) -> bool:
        return self.dissipative() and self.lambda1 < 0

    def flags(self) -> dict[str, bool]:
        return {
            "parodi_ok": self.parodi_ok(),
            "dissipative": self.dissipative(),
            "strictly_damped": self.strictly_damped(),
        }

    def pressure(self, rho):
        return self.a * np.power(rho, self.gamma)

    def pressure_derivative(self, rho):
        return self.a * self.gamma * np.power(rho, self.gamma - 1.0)


def validate(mu1=0.0, mu2=0.0, mu3=0.0, mu4=1.0, mu5=0.0, mu6=0.0, xi=0.0,
             a=1.5, gamma=2.0, lambda1=None, lambda2=None) -> LeslieCoefficients:
    """Build a :class:`LeslieCoefficients` after checking every relation.

    All violations are collected and reported together.
    """
    raw = dict(mu1=mu1, mu2=mu2, mu3=mu3, mu4=mu4, mu5=mu5, mu6=mu6, xi=xi, a=a, gamma=gamma)
    problems = [f"{k} must be finite, got {v!r}" for k, v in raw.items()
                if not math.isfinite(float(v))]
    if problems:
        raise CoefficientError(problems)
    if lambda1 is not None and not _close(float(lambda1), mu2 - mu3):
        problems.append(f"lambda1 must equal mu2 - mu3 = {mu2 - mu3:g}, got {lambda1:g}")
    if lambda2 is not None and not _close(float(lambda2), mu5 - mu6):
        problems.append(f"lambda2 must equal mu5 - mu6 = {mu5 - mu6:g}, got {lambda2:g}")
    if not _close(mu2 + mu3, mu6 - mu5):
        problems.append(
            f"Parodi relation mu2 + mu3 = mu6 - mu5 violated: {mu2 + mu3:g} != {mu6 - mu5:g}"
        )
    if not a > 1:
        problems.append(f"pressure amplitude a must exceed 1, got {a:g}")
    if not gamma >= 1:
        problems.append(f"adiabatic exponent gamma must be >= 1, got {gamma:g}")
    if problems:
        raise CoefficientError(problems)
    return LeslieCoefficients(**raw)


class FlowTensors(NamedTuple):
    A: np.ndarray
    B: np.ndarray


def flow_tensors_from_gradient(grad_u: np.ndarray) -> FlowTensors:
    """Split ``grad_u[j, i] = d_j u_i`` into strain rate and vorticity tensors."""
    gt = np.swapaxes(grad_u, 0, 1)  # gt[i, j] = d_j u_i
    return FlowTensors(0.5 * (gt + grad_u), 0.5 * (gt - grad_u))


def flow_tensors(grid: Grid2D, u: np.ndarray, scheme: str = "spectral") -> FlowTensors:
    return flow_tensors_from_gradient(gradient(grid, u, scheme))


def rotate(B: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``(B d)_i = B_ki d_k``."""
    return np.einsum("ki...,k...->i...", B, d)


def strain(A: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``(A d)_i = A_ik d_k`` (A is symmetric)."""
    return np.einsum("ik...,k...->i...", A, d)


def corotational_N(ddot: np.ndarray, B: np.ndarray, d: np.ndarray) -> np.ndarray:
    return ddot + rotate(B, d)


def kinematic_g(coeffs: LeslieCoefficients, N: np.ndarray, A: np.ndarray, d: np.ndarray) -> np.ndarray:
    return coeffs.lambda1 * N + coeffs.lambda2 * np.einsum("ij...,j...->i...", A, d)


def gamma_pointwise(lambda2: float, rho, ddot, grad_d, A, d) -> np.ndarray:
    """Closed-form multiplier ``-rho|ddot|^2 + |grad d|^2 - lambda2 d.A d``."""
    return (-rho * np.sum(ddot * ddot, axis=0)
            + np.sum(grad_d * grad_d, axis=(0, 1))
            - lambda2 * np.einsum("i...,ij...,j...->...", d, A, d))


def lagrange_gamma(grid: Grid2D, coeffs: LeslieCoefficients, rho, u, d, ddot,
                   scheme: str = "spectral", unit_tol: float = 1e-6) -> np.ndarray:
    dev = np.max(np.abs(np.sum(d * d, axis=0) - 1.0))
    if dev > unit_tol:
        warnings.warn(f"director deviates from unit length by {dev:.3g}", RuntimeWarning, stacklevel=2)
    A, _ = flow_tensors(grid, u, scheme)
    return gamma_pointwise(coeffs.lambda2, rho, ddot, gradient(grid, d, scheme), A, d)


def _identity(shape) -> np.ndarray:
    eye = np.zeros((2, 2, *shape))
    eye[0, 0] = eye[1, 1] = 1.0
    return eye


def viscous_stress(coeffs: LeslieCoefficients, A: np.ndarray) -> np.ndarray:
    """Isotropic Newtonian part ``mu4 A + xi tr(A) I``."""
    return coeffs.mu4 * A + coeffs.xi * (A[0, 0] + A[1, 1]) * _identity(A.shape[2:])


def elastic_stress(grad_d: np.ndarray) -> np.ndarray:
    """``|grad d|^2 I / 2 - grad d (.) grad d`` with ``(grad d (.) grad d)_ji = d_j d_k d_i d_k``."""
    gram = np.einsum("jk...,ik...->ji...", grad_d, grad_d)
    return 0.5 * (gram[0, 0] + gram[1, 1]) * _identity(grad_d.shape[2:]) - gram


def leslie_stress(coeffs: LeslieCoefficients, A, B, d, ddot) -> np.ndarray:
    """Anisotropic Leslie stress, stored as ``out[j, i] = sigma~_ji``."""
    N = corotational_N(ddot, B, d)
    Ad = np.einsum("ki...,k...->i...", A, d)  # d_k A_ki
    dAd = np.einsum("i...,i...->...", d, Ad)
    dd = np.einsum("j...,i...->ji...", d, d)
    return (coeffs.mu1 * dAd * dd
            + coeffs.mu2 * np.einsum("j...,i...->ji...", d, N)
            + coeffs.mu3 * np.einsum("i...,j...->ji...", d, N)
            + coeffs.mu5 * np.einsum("j...,i...->ji...", d, Ad)
            + coeffs.mu6 * np.einsum("i...,j...->ji...", d, Ad))


class Stresses(NamedTuple):
    viscous: np.ndarray
    elastic: np.ndarray
    leslie: np.ndarray


def stresses(grid: Grid2D, coeffs: LeslieCoefficients, u, d, ddot, scheme: str = "spectral") -> Stresses:
    A, B = flow_tensors(grid, u, scheme)
    return Stresses(viscous_stress(coeffs, A),
                    elastic_stress(gradient(grid, d, scheme)),
                    leslie_stress(coeffs, A, B, d, ddot))


def director_force(coeffs: LeslieCoefficients, rho, A, B, d, ddot, grad_d, lap_d) -> np.ndarray:
    """``Delta d + Gamma d + lambda1 (ddot + B d) + lambda2 A d`` (not divided by rho)."""
    gam = gamma_pointwise(coeffs.lambda2, rho, ddot, grad_d, A, d)
    return (lap_d + gam * d
            + coeffs.lambda1 * (ddot + rotate(B, d))
            + coeffs.lambda2 * strain(A, d))


def advect(u: np.ndarray, grad_f: np.ndarray) -> np.ndarray:
    """``(u . grad) f`` given ``grad_f[j, ...] = d_j f``."""
    return np.einsum("j...,j...->...", u, grad_f) if grad_f.ndim == 3 else \
        np.einsum("j...,ji...->i...", u, grad_f)


def check_density(rho: np.ndarray, floor: float = 1e-8) -> None:
    low = float(np.min(rho))
    if not low > floor:
        raise VacuumError(f"vacuum state: min density {low:.3g} <= floor {floor:.3g}")


class Residuals(NamedTuple):
    """Time derivatives of the conserved/evolved quantities.

    ``mass`` is d_t rho, ``momentum`` is d_t(rho u), ``director`` is d_t ddot
    and ``director_position`` is d_t d.
    """

    mass: np.ndarray
    momentum: np.ndarray
    director: np.ndarray
    director_position: np.ndarray


def residuals(grid: Grid2D, coeffs: LeslieCoefficients, state, scheme: str = "spectral",
              rho_floor: float = 1e-8) -> Residuals:
    """Evaluate the right-hand sides of the compressible hyperbolic system."""
    rho = check_field(grid, state.rho, "rho")
    u = check_field(grid, state.u, "u")
    d = check_field(grid, state.d, "d")
    ddot = check_field(grid, state.ddot, "ddot")
    if rho.ndim != 2 or u.ndim != 3 or d.ndim != 3 or ddot.ndim != 3:
        raise FieldError("state must hold a scalar density and vector u, d, ddot")
    check_density(rho, rho_floor)

    A, B = flow_tensors(grid, u, scheme)
    grad_d = gradient(grid, d, scheme)
    grad_ddot = gradient(grid, ddot, scheme)

    mass = -divergence(grid, rho * u, scheme)
    total_stress = viscous_stress(coeffs, A) + elastic_stress(grad_d) + leslie_stress(coeffs, A, B, d, ddot)
    momentum = (-divergence(grid, rho * np.einsum("j...,i...->ji...", u, u), scheme)
                - gradient(grid, coeffs.pressure(rho), scheme)
                + divergence(grid, total_stress, scheme))
    force = director_force(coeffs, rho, A, B, d, ddot, grad_d, laplacian(grid, d, scheme))
    director = force / rho - advect(u, grad_ddot)
    position = ddot - advect(u, grad_d)
    return Residuals(mass, momentum, director, position)
