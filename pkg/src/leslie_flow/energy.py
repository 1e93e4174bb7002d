"""Energy and dissipation functionals, the energy-law audit and certificates.

All norms are squared quantities: ``|f|^2_{H^s_w} = sum_k int w |grad^k f|^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import NamedTuple, Sequence

import numpy as np

from .constitutive import LeslieCoefficients, check_density, flow_tensors, rotate, strain
from .grid import S_MAX, FieldError, Grid2D, divergence, gradient, iter_partials, seminorm_sq


class EnergyRangeError(ValueError):
    """Raised when an energy functional is requested outside its domain."""


def _check_order(s: int, lo: int = 1) -> int:
    if isinstance(s, bool) or int(s) != s or not lo <= s <= S_MAX:
        raise EnergyRangeError(f"Sobolev order must be an integer in [{lo}, {S_MAX}], got {s!r}")
    return int(s)


def _check_gamma(coeffs: LeslieCoefficients) -> None:
    if coeffs.gamma <= 1.0 + 1e-6:
        raise EnergyRangeError(f"energy functionals need gamma > 1, got {coeffs.gamma:g}")


def _hs(grid, f, lo, hi, weight=None, scheme="spectral") -> float:
    return sum(seminorm_sq(grid, f, k, weight, scheme) for k in range(lo, hi + 1))


def _pressure_weight(coeffs: LeslieCoefficients, rho: np.ndarray) -> np.ndarray:
    """``p'(rho) / rho = a gamma rho^(gamma - 2)``."""
    return coeffs.a * coeffs.gamma * np.power(rho, coeffs.gamma - 2.0)


def _potential_excess(coeffs: LeslieCoefficients, rho: np.ndarray) -> np.ndarray:
    """``rho^gamma - 1 - gamma (rho - 1)`` evaluated without cancellation."""
    varrho = rho - 1.0
    return np.expm1(coeffs.gamma * np.log1p(varrho)) - coeffs.gamma * varrho


@dataclass(frozen=True)
class EnergyBreakdown:
    t: float
    N_s_rho: float
    u_Hs_rho: float
    ddot_Hs_rho: float
    grad_d_Hs: float
    total_E: float
    E_tilde: float
    E_eta: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class DissipationBreakdown:
    t: float
    viscous: float
    bulk: float
    mu1_term: float
    lambda1_term: float
    lambda2_term: float
    total_D: float
    D_eta: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def energy(grid: Grid2D, state, coeffs: LeslieCoefficients, s: int = 3, eta1: float = 0.0,
           eta2: float = 0.0, scheme: str = "spectral") -> EnergyBreakdown:
    s = _check_order(s)
    _check_gamma(coeffs)
    rho, u, d, ddot = state.rho, state.u, state.d, state.ddot
    check_density(rho)
    w = _pressure_weight(coeffs, rho)
    varrho = rho - 1.0

    mass_term = 2.0 * coeffs.a / (coeffs.gamma - 1.0) * grid.integrate(np.power(rho, coeffs.gamma))
    N_s = _hs(grid, rho, 1, s, w, scheme) + mass_term
    u_sq = _hs(grid, u, 0, s, rho, scheme)
    ddot_sq = _hs(grid, ddot, 0, s, rho, scheme)
    grad_d_sq = _hs(grid, d, 1, s + 1, None, scheme)

    E_tilde = perturbation_energy(grid, state, s, scheme)

    E_eta = (grid.integrate(w * varrho**2)
             + _hs(grid, varrho, 1, s, w - eta1, scheme)
             + _hs(grid, u, 0, s - 1, rho - eta1, scheme)
             + _hs(grid, ddot, 1, s, rho - eta2, scheme)
             + (1.0 - eta2) * _hs(grid, d, 1, s, None, scheme)
             + seminorm_sq(grid, u, s, rho, scheme)
             + grid.integrate(rho * np.sum(ddot**2, axis=0))
             + seminorm_sq(grid, d, s + 1, None, scheme))
    if eta1:
        E_eta += eta1 * _hs(grid, u + gradient(grid, varrho, scheme), 0, s - 1, None, scheme)
    if eta2:
        E_eta += eta2 * _hs(grid, ddot + d, 1, s, None, scheme)

    return EnergyBreakdown(state.t, N_s, u_sq, ddot_sq, grad_d_sq,
                           N_s + u_sq + ddot_sq + grad_d_sq, E_tilde, E_eta)


def perturbation_energy(grid: Grid2D, state, s: int = 3, scheme: str = "spectral") -> float:
    """``|u|^2_{H^s} + |rho - 1|^2_{H^s} + |ddot|^2_{H^s} + |grad d|^2_{H^s}``."""
    s = _check_order(s)
    return (_hs(grid, state.u, 0, s, None, scheme) + _hs(grid, state.rho - 1.0, 0, s, None, scheme)
            + _hs(grid, state.ddot, 0, s, None, scheme) + _hs(grid, state.d, 1, s + 1, None, scheme))


class _DissipationSums(NamedTuple):
    strain: float   # sum |(grad^k A) d|^2
    mu1: float      # sum |d.(grad^k A) d|^2
    lambda1: float  # sum |grad^k ddot + (grad^k B) d + r (grad^k A) d|^2


def _anisotropic_sums(grid, coeffs, u, d, ddot, s, scheme) -> _DissipationSums:
    A, B = flow_tensors(grid, u, scheme)
    ratio = coeffs.lambda_ratio
    strain_sq = mu1_sq = lam_sq = 0.0
    for k in range(s + 1):
        for (mult, dA), (_, dB), (_, dv) in zip(iter_partials(grid, A, k, scheme),
                                                iter_partials(grid, B, k, scheme),
                                                iter_partials(grid, ddot, k, scheme)):
            Ad = strain(dA, d)
            strain_sq += mult * grid.integrate(np.sum(Ad**2, axis=0))
            mu1_sq += mult * grid.integrate(np.sum(d * Ad, axis=0) ** 2)
            co = dv + rotate(dB, d) + ratio * Ad
            lam_sq += mult * grid.integrate(np.sum(co**2, axis=0))
    return _DissipationSums(strain_sq, mu1_sq, lam_sq)


def dissipation(grid: Grid2D, state, coeffs: LeslieCoefficients, s: int = 3, eta1: float = 0.0,
                eta2: float = 0.0, scheme: str = "spectral") -> DissipationBreakdown:
    s = _check_order(s, lo=0)
    rho, u, d, ddot = state.rho, state.u, state.d, state.ddot
    check_density(rho)
    grad_u_sq = _hs(grid, gradient(grid, u, scheme), 0, s, None, scheme)
    div_u_sq = _hs(grid, divergence(grid, u, scheme), 0, s, None, scheme)
    sums = _anisotropic_sums(grid, coeffs, u, d, ddot, s, scheme)

    viscous = 0.5 * coeffs.mu4 * grad_u_sq
    bulk = (0.5 * coeffs.mu4 + coeffs.xi) * div_u_sq
    mu1_term = coeffs.mu1 * sums.mu1
    lambda1_term = -coeffs.lambda1 * sums.lambda1 + 0.0  # avoid -0.0 when lambda1 = 0
    lambda2_term = coeffs.reduced_stretch * sums.strain
    total = viscous + bulk + mu1_term + lambda1_term + lambda2_term

    D_eta = (0.5 * viscous + 0.5 * bulk + mu1_term + 0.5 * lambda1_term + lambda2_term)
    if eta1 and s >= 1:
        _check_gamma(coeffs)
        D_eta += 0.75 * eta1 * _hs(grid, rho - 1.0, 1, s, _pressure_weight(coeffs, rho), scheme)
    if eta2 and s >= 1:
        D_eta += 0.75 * eta2 * _hs(grid, d, 2, s + 1, rho**-2.0, scheme)
    return DissipationBreakdown(state.t, viscous, bulk, mu1_term, lambda1_term, lambda2_term, total, D_eta)


class BasicEnergy(NamedTuple):
    """Terms of the L^2 energy ``int 2a/(gamma-1) rho^gamma + rho|u|^2 + rho|ddot|^2 + |grad d|^2``.

    The pressure potential is split into a part linear in ``rho`` (constant
    under mass conservation) and the nonnegative excess, so that time
    differences of nearly equal totals keep their precision.
    """

    potential_mass: float
    potential_excess: float
    kinetic: float
    director_kinetic: float
    elastic: float

    @property
    def total(self) -> float:
        return float(sum(self))


def basic_energy(grid: Grid2D, state, coeffs: LeslieCoefficients, scheme: str = "spectral") -> BasicEnergy:
    _check_gamma(coeffs)
    rho = state.rho
    scale = 2.0 * coeffs.a / (coeffs.gamma - 1.0)
    return BasicEnergy(
        scale * (grid.volume + coeffs.gamma * grid.integrate(rho - 1.0)),
        scale * grid.integrate(_potential_excess(coeffs, rho)),
        grid.integrate(rho * np.sum(state.u**2, axis=0)),
        grid.integrate(rho * np.sum(state.ddot**2, axis=0)),
        seminorm_sq(grid, state.d, 1, None, scheme),
    )


def basic_dissipation(grid: Grid2D, state, coeffs: LeslieCoefficients, scheme: str = "spectral") -> float:
    return dissipation(grid, state, coeffs, s=0, scheme=scheme).total_D


class AuditResult(NamedTuple):
    times: np.ndarray
    residuals: np.ndarray
    max_abs: float


class EnergyLawMonitor:
    """Streaming form of :func:`energy_law_audit` that keeps only three samples."""

    def __init__(self, dt: float, coeffs: LeslieCoefficients, scheme: str = "spectral"):
        if not dt > 0:
            raise ValueError(f"sample spacing must be positive, got {dt!r}")
        self.dt, self.coeffs, self.scheme = dt, coeffs, scheme
        self._window: list[tuple[object, np.ndarray]] = []
        self.times: list[float] = []
        self.residuals: list[float] = []

    def push(self, state) -> float | None:
        parts = np.array(basic_energy(state.grid, state, self.coeffs, self.scheme))
        self._window = (self._window + [(state, parts)])[-3:]
        if len(self._window) < 3:
            return None
        (_, before), (mid, _), (_, after) = self._window
        # difference each term separately, then sum the rates
        rate = float(np.sum(after - before)) / (2.0 * self.dt)
        r = rate + 2.0 * basic_dissipation(mid.grid, mid, self.coeffs, self.scheme)
        self.times.append(mid.t)
        self.residuals.append(r)
        return r

    def result(self) -> AuditResult:
        if not self.residuals:
            raise ValueError("energy-law audit needs at least 3 samples")
        r = np.array(self.residuals)
        return AuditResult(np.array(self.times), r, float(np.max(np.abs(r))))


def energy_law_audit(trajectory: Sequence, dt: float, coeffs: LeslieCoefficients,
                     scheme: str = "spectral") -> AuditResult:
    """Centered-difference residual ``dE0/dt + 2 D0`` at every interior sample.

    ``trajectory`` holds states (or tuples whose first entry is a state)
    sampled at uniform spacing ``dt``.  Energies are recomputed by direct
    quadrature, independently of anything the solver reports.
    """
    states = [item[0] if isinstance(item, tuple) else item for item in trajectory]
    if len(states) < 3:
        raise ValueError(f"energy-law audit needs at least 3 samples, got {len(states)}")
    monitor = EnergyLawMonitor(dt, coeffs, scheme)
    for st in states:
        monitor.push(st)
    return monitor.result()


def convergence_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(step)``."""
    h = np.asarray(steps, dtype=float)
    e = np.asarray(errors, dtype=float)
    if h.size < 2 or h.size != e.size:
        raise ValueError("need at least two (step, error) pairs of equal length")
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("steps and errors must be positive to measure an order")
    return float(np.polyfit(np.log(h), np.log(e), 1)[0])


@dataclass(frozen=True)
class DensityCertificate:
    passed: bool
    worst_margin: float
    first_failure: int | None
    lower: np.ndarray
    upper: np.ndarray
    margins: np.ndarray


def density_bound_check(rho_series: Sequence, divu_inf_series: Sequence[float], rho_lo: float,
                        rho_hi: float, dt: float, rtol: float = 1e-12) -> DensityCertificate:
    """Check ``rho_lo e^{-I(t)} <= min rho(t)`` and ``max rho(t) <= rho_hi e^{I(t)}``.

    ``I(t)`` is the trapezoid-rule integral of ``|div u|_inf``.  Margins are
    relative to the bound; a step fails when its margin is below ``-rtol``.
    """
    lo = np.array([float(np.min(r)) for r in rho_series])
    hi = np.array([float(np.max(r)) for r in rho_series])
    g = np.asarray(divu_inf_series, dtype=float)
    if lo.size == 0 or lo.size != g.size:
        raise ValueError("density and divergence series must be non-empty and of equal length")
    if not 0 < rho_lo <= rho_hi:
        raise ValueError(f"need 0 < rho_lo <= rho_hi, got {rho_lo!r}, {rho_hi!r}")
    if lo[0] < rho_lo * (1 - rtol) or hi[0] > rho_hi * (1 + rtol):
        raise ValueError(f"initial density [{lo[0]:.6g}, {hi[0]:.6g}] outside [{rho_lo:.6g}, {rho_hi:.6g}]")
    integral = np.concatenate([[0.0], np.cumsum(0.5 * dt * (g[1:] + g[:-1]))])
    lower = rho_lo * np.exp(-integral)
    upper = rho_hi * np.exp(integral)
    margins = np.minimum((lo - lower) / lower, (upper - hi) / upper)
    failing = np.flatnonzero(margins < -rtol)
    first = int(failing[0]) if failing.size else None
    return DensityCertificate(first is None, float(margins.min()), first, lower, upper, margins)


def constraint_residuals(state) -> tuple[float, float]:
    """``(max ||d|^2 - 1|, max |d . ddot|)`` over the grid."""
    d, ddot = np.asarray(state.d), np.asarray(state.ddot)
    unit = float(np.max(np.abs(np.sum(d * d, axis=0) - 1.0)))
    tangency = float(np.max(np.abs(np.sum(d * ddot, axis=0))))
    return unit, tangency


def eta_equivalence_bounds(rho: np.ndarray, coeffs: LeslieCoefficients, eta1: float,
                           eta2: float) -> tuple[float, float]:
    """Constants ``c, C`` with ``c E_tilde <= E_eta <= C E_tilde`` at density ``rho``."""
    w = _pressure_weight(coeffs, rho)
    eta = max(eta1, eta2)
    c = min(float(w.min()) - eta1, float(rho.min()) - eta, 1.0 - eta2)
    C = max(float(w.max()) + eta1, float(rho.max()) + eta, 1.0 + eta2)
    if c <= 0:
        raise FieldError(f"eta ({eta1:g}, {eta2:g}) too large for this density: lower constant {c:g}")
    return c, C


def max_divergence(grid: Grid2D, u: np.ndarray, scheme: str = "spectral") -> float:
    return float(np.max(np.abs(divergence(grid, u, scheme))))


def sobolev_time_integrand(grid: Grid2D, u: np.ndarray, s: int, scheme: str = "spectral") -> float:
    """``|grad u|^2_{H^s}``, the integrand of the reported dissipation budget."""
    return _hs(grid, gradient(grid, u, scheme), 0, s, None, scheme)


__all__ = [
    "AuditResult", "BasicEnergy", "EnergyLawMonitor", "DensityCertificate", "DissipationBreakdown", "EnergyBreakdown",
    "EnergyRangeError", "basic_dissipation", "basic_energy", "constraint_residuals",
    "convergence_order", "density_bound_check", "dissipation", "energy", "energy_law_audit",
    "eta_equivalence_bounds", "max_divergence", "perturbation_energy", "sobolev_time_integrand",
]
