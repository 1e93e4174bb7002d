"""Time integration on the torus.

One step advances ``(rho, u, d, ddot)``.  The stiff part of the momentum
equation, ``div(Sigma_1 + sigma~)`` restricted to its terms linear in
``grad u``, is treated implicitly through a symmetric positive definite
solve; everything else is explicit.  Three integrators are available:

* ``lie``: first-order splitting (density, momentum, director)
* ``strang``: second-order symmetric splitting, half implicit viscous
  steps around an explicit Heun step
* Picard: a trapezoidal-rule fixed point solved by lagged iteration
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import grid as gc
from .constitutive import (
    LeslieCoefficients,
    VacuumError,
    advect,
    check_density,
    director_force,
    elastic_stress,
    flow_tensors,
    leslie_stress,
    viscous_stress,
)
from .energy import (
    DissipationBreakdown,
    EnergyBreakdown,
    constraint_residuals,
    density_bound_check,
    dissipation,
    energy,
    max_divergence,
    perturbation_energy,
    sobolev_time_integrand,
)
from .grid import FieldError, Grid2D, SpectralTruncation
from .state import State

SPLITTINGS = ("lie", "strang")
INITIAL_KINDS = ("equilibrium_perturbation", "stationary_harmonic", "custom")


class SolverError(RuntimeError):
    """Base class for failures raised while stepping."""


class CFLViolation(SolverError):
    pass


class PicardDivergence(SolverError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class PicardSettings:
    max_iters: int = 20
    tol: float = 1e-10

    def __post_init__(self):
        if self.max_iters < 1 or not self.tol > 0:
            raise ValueError("picard needs max_iters >= 1 and tol > 0")


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    t_end: float
    scheme: str = "spectral"
    splitting: str = "lie"
    mollifier_eps: float | None = None
    picard: PicardSettings | None = None
    project_director: bool = True
    cfl_limit: float = 0.5
    rho_floor: float = 1e-8
    dealias: bool = False
    constraint_tol: float = 1e-6
    linear_rtol: float = 1e-13

    def __post_init__(self):
        problems = []
        if not (math.isfinite(self.dt) and self.dt > 0):
            problems.append(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            problems.append(f"t_end must be non-negative, got {self.t_end!r}")
        if self.scheme not in gc.SCHEMES:
            problems.append(f"scheme must be one of {gc.SCHEMES}, got {self.scheme!r}")
        if self.splitting not in SPLITTINGS:
            problems.append(f"splitting must be one of {SPLITTINGS}, got {self.splitting!r}")
        if not 0 < self.cfl_limit <= 1:
            problems.append(f"cfl_limit must lie in (0, 1], got {self.cfl_limit!r}")
        if self.mollifier_eps is not None and not self.mollifier_eps > 0:
            problems.append(f"mollifier_eps must be positive, got {self.mollifier_eps!r}")
        if not self.rho_floor >= 0:
            problems.append(f"rho_floor must be non-negative, got {self.rho_floor!r}")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def n_steps(self) -> int:
        steps = round(self.t_end / self.dt)
        if abs(steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError(f"t_end={self.t_end} is not a whole number of steps of dt={self.dt}")
        return int(steps)


@dataclass(frozen=True)
class StepReport:
    t: float
    cfl_observed: float
    picard_iters: int
    picard_residual: float
    unit_norm_dev: float
    tangency_dev: float
    min_rho: float
    max_rho: float
    linear_iters: int = 0


def _normalize(d: np.ndarray) -> np.ndarray:
    norm = np.sqrt(np.sum(d * d, axis=0))
    if np.any(norm == 0):
        raise FieldError("director vanishes somewhere and cannot be normalized")
    return d / norm


def _tangential(d: np.ndarray, ddot: np.ndarray) -> np.ndarray:
    return ddot - np.sum(d * ddot, axis=0) * d


def _random_trig(grid: Grid2D, rng: np.random.Generator, modes: int, zero_mean: bool) -> np.ndarray:
    """Random real trigonometric polynomial with max-norm 1."""
    x1, x2 = grid.coords
    scale = 2.0 * math.pi / grid.length
    f = np.zeros_like(x1)
    for m1 in range(-modes, modes + 1):
        for m2 in range(0, modes + 1):
            if m2 == 0 and m1 < 0:
                continue
            phase = scale * (m1 * x1 + m2 * x2)
            a, b = rng.standard_normal(2)
            if m1 == m2 == 0:
                if not zero_mean:
                    f += a
                continue
            f += (a * np.cos(phase) + b * np.sin(phase)) / (1.0 + m1 * m1 + m2 * m2)
    peak = np.max(np.abs(f))
    return f / peak if peak > 0 else f


def make_initial(kind: str, grid: Grid2D, amplitude: float = 0.0, seed: int = 0, *,
                 modes: int = 2, director: tuple[float, float] = (1.0, 0.0),
                 rho=None, u=None, d=None, ddot=None, rho_floor: float = 1e-8) -> State:
    """Build compatible initial data: ``|d| = 1`` and ``d . ddot = 0``."""
    if not amplitude >= 0:
        raise ValueError(f"amplitude must be non-negative, got {amplitude!r}")
    shape = (grid.n, grid.n)
    if kind == "equilibrium_perturbation":
        rng = np.random.default_rng(seed)
        pert = [amplitude * _random_trig(grid, rng, modes, zero_mean=(i == 0)) for i in range(7)]
        rho_f = 1.0 + pert[0]
        u_f = np.stack(pert[1:3])
        d_f = np.asarray(director, dtype=float)[:, None, None] + np.stack(pert[3:5])
        ddot_f = np.stack(pert[5:7])
    elif kind == "stationary_harmonic":
        x1 = grid.coords[0] * (2.0 * math.pi / grid.length)
        rho_f, u_f = np.ones(shape), np.zeros((2, *shape))
        d_f, ddot_f = np.stack([np.cos(x1), np.sin(x1)]), np.zeros((2, *shape))
    elif kind == "custom":
        rho_f = np.broadcast_to(np.asarray(1.0 if rho is None else rho, dtype=float), shape)
        u_f = _broadcast_vector(0.0 if u is None else u, shape)
        d_f = _broadcast_vector(director if d is None else d, shape)
        ddot_f = _broadcast_vector(0.0 if ddot is None else ddot, shape)
    else:
        raise ValueError(f"unknown initial-data kind {kind!r}; expected one of {INITIAL_KINDS}")
    rho_f = np.array(rho_f, dtype=float)
    check_density(rho_f, rho_floor)
    d_f = _normalize(np.array(d_f, dtype=float))
    return State(grid, 0.0, rho_f, np.array(u_f, dtype=float), d_f, _tangential(d_f, ddot_f))


def _broadcast_vector(v, shape) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None, None]
    return np.broadcast_to(arr, (2, *shape)).copy()


class _Fields(NamedTuple):
    rho: np.ndarray
    u: np.ndarray
    d: np.ndarray
    ddot: np.ndarray


class Integrator:
    """Discrete operators for one (grid, coefficients, config) triple."""

    def __init__(self, grid: Grid2D, coeffs: LeslieCoefficients, config: SolverConfig):
        if not coeffs.dissipative():
            raise SolverError("the implicit viscous solve needs dissipative coefficients")
        self.grid, self.coeffs, self.config = grid, coeffs, config
        self.scheme = config.scheme
        self._trunc = None if config.mollifier_eps is None else SpectralTruncation(config.mollifier_eps)
        self._anisotropic = any((coeffs.mu1, coeffs.mu2, coeffs.mu3, coeffs.mu5, coeffs.mu6))
        if config.scheme == "spectral":
            k1, k2 = grid.odd_wavenumbers
        else:
            k1, k2 = (np.sin(k * grid.spacing) / grid.spacing for k in grid.wavenumbers)
        self._k = (k1, k2)
        m1, m2 = grid._index_freqs
        self._dealias_mask = (np.abs(m1) <= grid.n // 3) & (m2 <= grid.n // 3)
        self.linear_iters = 0

    # explicit pieces -------------------------------------------------

    def _mollify(self, f: np.ndarray) -> np.ndarray:
        return f if self._trunc is None else gc.mollify(self.grid, f, self._trunc)

    def mass_rate(self, rho, u) -> np.ndarray:
        return -gc.divergence(self.grid, rho * u, self.scheme)

    def explicit_momentum(self, f: _Fields) -> np.ndarray:
        """``-div(rho u u) - grad p + div(Sigma_2 + sigma~ at u = 0)``."""
        g, sch = self.grid, self.scheme
        zero = np.zeros((2, 2, g.n, g.n))
        stress = (elastic_stress(gc.gradient(g, f.d, sch))
                  + leslie_stress(self.coeffs, zero, zero, f.d, f.ddot)
                  - f.rho * np.einsum("j...,i...->ji...", f.u, f.u))
        return gc.divergence(g, stress, sch) - gc.gradient(g, self.coeffs.pressure(f.rho), sch)

    def ddot_rate(self, f: _Fields, grad_d: np.ndarray | None = None) -> np.ndarray:
        g, sch = self.grid, self.scheme
        A, B = flow_tensors(g, f.u, sch)
        if grad_d is None:
            grad_d = gc.gradient(g, f.d, sch)
        force = director_force(self.coeffs, f.rho, A, B, f.d, f.ddot, grad_d, gc.laplacian(g, f.d, sch))
        return self._mollify(force / f.rho - advect(f.u, gc.gradient(g, f.ddot, sch)))

    def d_rate(self, f: _Fields, grad_d: np.ndarray | None = None) -> np.ndarray:
        if grad_d is None:
            grad_d = gc.gradient(self.grid, f.d, self.scheme)
        return f.ddot - self._mollify(advect(f.u, grad_d))

    def director_rates(self, f: _Fields) -> tuple[np.ndarray, np.ndarray]:
        grad_d = gc.gradient(self.grid, f.d, self.scheme)
        return self.d_rate(f, grad_d), self.ddot_rate(f, grad_d)

    # implicit viscous part ------------------------------------------

    def viscous_apply(self, u: np.ndarray, d: np.ndarray) -> np.ndarray:
        """``div(Sigma_1(u) + sigma~(u; d, ddot = 0))``: symmetric, negative semidefinite."""
        A, B = flow_tensors(self.grid, u, self.scheme)
        stress = viscous_stress(self.coeffs, A)
        if self._anisotropic:
            stress = stress + leslie_stress(self.coeffs, A, B, d, np.zeros_like(d))
        return gc.divergence(self.grid, stress, self.scheme)

    def viscous_solve(self, rho, d, rhs, theta_h: float, guess=None) -> np.ndarray:
        """Solve ``(rho - theta_h L) u = rhs`` by preconditioned conjugate gradients."""
        if theta_h == 0:
            return rhs / rho
        n = self.grid.n
        size = 2 * n * n

        def matvec(x):
            u = x.reshape(2, n, n)
            return (rho * u - theta_h * self.viscous_apply(u, d)).ravel()

        k1, k2 = self._k
        c = self.coeffs
        alpha = float(np.mean(rho)) + theta_h * 0.5 * c.mu4 * (k1**2 + k2**2)
        beta = theta_h * (0.5 * c.mu4 + c.xi)
        gain = beta / (alpha * (alpha + beta * (k1**2 + k2**2)))

        def precond(x):
            rh = gc._rfft2(x.reshape(2, n, n))
            kr = k1 * rh[0] + k2 * rh[1]
            out = np.stack([rh[0] / alpha - gain * k1 * kr, rh[1] / alpha - gain * k2 * kr])
            return gc._irfft2(out, n).ravel()

        counter = [0]

        def count(_):
            counter[0] += 1

        op = LinearOperator((size, size), matvec=matvec, dtype=float)
        pre = LinearOperator((size, size), matvec=precond, dtype=float)
        x0 = None if guess is None else np.asarray(guess, dtype=float).ravel()
        # absolute floor: residuals of unit-size fields at the relative tolerance
        atol = self.config.linear_rtol * math.sqrt(size)
        sol, info = cg(op, rhs.ravel(), x0=x0, rtol=self.config.linear_rtol, atol=atol,
                       maxiter=1000, M=pre, callback=count)
        if info != 0:
            raise SolverError(f"implicit viscous solve failed to converge (info={info})")
        self.linear_iters += counter[0]
        return sol.reshape(2, n, n)

    # integrators ----------------------------------------------------

    def lie(self, f: _Fields, h: float) -> _Fields:
        rho1 = f.rho + h * self.mass_rate(f.rho, f.u)
        check_density(rho1, self.config.rho_floor)
        momentum = f.rho * f.u + h * self.explicit_momentum(f)
        u1 = self.viscous_solve(rho1, f.d, momentum, h, guess=f.u)
        # symplectic Euler: ddot first, then d with the new ddot
        ddot1 = f.ddot + h * self.ddot_rate(_Fields(rho1, u1, f.d, f.ddot))
        return _Fields(rho1, u1, f.d + h * self.d_rate(_Fields(rho1, u1, f.d, ddot1)), ddot1)

    def _cn_viscous(self, f: _Fields, h: float) -> _Fields:
        rhs = f.rho * f.u + 0.5 * h * self.viscous_apply(f.u, f.d)
        return f._replace(u=self.viscous_solve(f.rho, f.d, rhs, 0.5 * h, guess=f.u))

    def _explicit_rates(self, f: _Fields):
        d_rate, ddot_rate = self.director_rates(f)
        return self.mass_rate(f.rho, f.u), self.explicit_momentum(f), d_rate, ddot_rate

    def _heun(self, f: _Fields, h: float) -> _Fields:
        m = f.rho * f.u
        k1 = self._explicit_rates(f)
        rho_s = f.rho + h * k1[0]
        check_density(rho_s, self.config.rho_floor)
        stage = _Fields(rho_s, (m + h * k1[1]) / rho_s, f.d + h * k1[2], f.ddot + h * k1[3])
        k2 = self._explicit_rates(stage)
        rho1 = f.rho + 0.5 * h * (k1[0] + k2[0])
        check_density(rho1, self.config.rho_floor)
        return _Fields(rho1, (m + 0.5 * h * (k1[1] + k2[1])) / rho1,
                       f.d + 0.5 * h * (k1[2] + k2[2]), f.ddot + 0.5 * h * (k1[3] + k2[3]))

    def strang(self, f: _Fields, h: float) -> _Fields:
        f = self._cn_viscous(f, 0.5 * h)
        f = self._heun(f, h)
        return self._cn_viscous(f, 0.5 * h)

    def picard(self, f: _Fields, h: float, settings: PicardSettings) -> tuple[_Fields, int, float]:
        """Trapezoidal step ``X = X_n + h/2 (F(X_n) + F(X))`` by lagged iteration."""
        half = 0.5 * h
        mass_n = self.mass_rate(f.rho, f.u)
        mom_n = f.rho * f.u + half * (self.explicit_momentum(f) + self.viscous_apply(f.u, f.d))
        d_rate_n, ddot_rate_n = self.director_rates(f)
        it = f
        history: list[float] = []
        for k in range(1, settings.max_iters + 1):
            d_rate, ddot_rate = self.director_rates(it)
            new = _Fields(
                f.rho + half * (mass_n + self.mass_rate(it.rho, it.u)),
                self.viscous_solve(it.rho, it.d, mom_n + half * self.explicit_momentum(it), half, guess=it.u),
                f.d + half * (d_rate_n + d_rate),
                f.ddot + half * (ddot_rate_n + ddot_rate),
            )
            check_density(new.rho, self.config.rho_floor)
            residual = max(_relative_change(a, b) for a, b in zip(new, it))
            history.append(residual)
            it = new
            if residual <= settings.tol:
                return it, k, residual
        raise PicardDivergence(
            f"Picard iteration stalled after {settings.max_iters} iterations "
            f"(residual {history[-1]:.3g} > tol {settings.tol:.3g})", history)

    def finish(self, f: _Fields) -> _Fields:
        if self.config.dealias:
            mask = self._dealias_mask
            f = _Fields(*(gc._irfft2(mask * gc._rfft2(x), self.grid.n) for x in f))
        if self.config.project_director:
            d = _normalize(f.d)
            f = f._replace(d=d, ddot=_tangential(d, f.ddot))
        return f

    def cfl(self, f: _Fields) -> float:
        wave = math.sqrt(float(np.max(1.0 / f.rho)))
        sound = math.sqrt(float(np.max(self.coeffs.pressure_derivative(f.rho))))
        speed = float(np.max(np.sqrt(np.sum(f.u**2, axis=0)))) + max(wave, sound)
        return self.config.dt * speed / self.grid.spacing


def _relative_change(new: np.ndarray, old: np.ndarray) -> float:
    """L2 change relative to ``max(|new|, |1|)``, so fields near zero are measured at unit scale."""
    diff = float(np.linalg.norm(new - old))
    if diff == 0.0:
        return 0.0
    unit = math.sqrt(new.size)
    return diff / max(float(np.linalg.norm(new)), unit)


def _validate_state(state: State, config: SolverConfig) -> _Fields:
    check_density(state.rho, config.rho_floor)
    return _Fields(np.asarray(state.rho), np.asarray(state.u), np.asarray(state.d), np.asarray(state.ddot))


def _advance(state: State, integ: Integrator, use_picard: bool) -> tuple[State, StepReport]:
    config = integ.config
    f = _validate_state(state, config)
    cfl = integ.cfl(f)
    if cfl > config.cfl_limit:
        suggestion = config.dt * config.cfl_limit / cfl
        raise CFLViolation(f"CFL number {cfl:.3g} exceeds limit {config.cfl_limit:g}; "
                           f"reduce dt below {suggestion:.3g}")
    integ.linear_iters = 0
    iters, residual = 0, 0.0
    if use_picard:
        f, iters, residual = integ.picard(f, config.dt, config.picard or PicardSettings())
    elif config.splitting == "strang":
        f = integ.strang(f, config.dt)
    else:
        f = integ.lie(f, config.dt)
    f = integ.finish(f)
    check_density(f.rho, config.rho_floor)
    new = state.evolve(state.t + config.dt, rho=f.rho, u=f.u, d=f.d, ddot=f.ddot)
    unit, tangency = constraint_residuals(new)
    report = StepReport(new.t, cfl, iters, residual, unit, tangency,
                        float(f.rho.min()), float(f.rho.max()), integ.linear_iters)
    return new, report


def step(state: State, coeffs: LeslieCoefficients, config: SolverConfig,
         integrator: Integrator | None = None) -> tuple[State, StepReport]:
    """One split step (or a Picard step when ``config.picard`` is set)."""
    integ = integrator or Integrator(state.grid, coeffs, config)
    return _advance(state, integ, config.picard is not None)


def picard_step(state: State, coeffs: LeslieCoefficients, config: SolverConfig,
                integrator: Integrator | None = None) -> tuple[State, StepReport]:
    integ = integrator or Integrator(state.grid, coeffs, config)
    return _advance(state, integ, True)


@dataclass(frozen=True)
class Record:
    """Diagnostics emitted to sinks at every recorded step."""

    step: int
    state: State
    energy: EnergyBreakdown
    dissipation: DissipationBreakdown
    report: StepReport | None
    unit_norm_dev: float
    tangency_dev: float
    divu_integral: float
    density_margin: float
    dissipation_budget: float

    def row(self) -> dict[str, float]:
        e, dd = self.energy, self.dissipation
        rep = self.report
        return {
            "step": self.step,
            "t": self.state.t,
            "total_E": e.total_E,
            "E_tilde": e.E_tilde,
            "E_eta": e.E_eta,
            "total_D": dd.total_D,
            "D_eta": dd.D_eta,
            "N_s_rho": e.N_s_rho,
            "u_Hs_rho": e.u_Hs_rho,
            "ddot_Hs_rho": e.ddot_Hs_rho,
            "grad_d_Hs": e.grad_d_Hs,
            "viscous": dd.viscous,
            "bulk": dd.bulk,
            "mu1_term": dd.mu1_term,
            "lambda1_term": dd.lambda1_term,
            "lambda2_term": dd.lambda2_term,
            "unit_norm_dev": self.unit_norm_dev,
            "tangency_dev": self.tangency_dev,
            "min_rho": float(self.state.rho.min()),
            "max_rho": float(self.state.rho.max()),
            "density_bound_margin": self.density_margin,
            "cfl_observed": rep.cfl_observed if rep else 0.0,
            "picard_iters": rep.picard_iters if rep else 0,
            "dissipation_budget": self.dissipation_budget,
        }


SERIES_COLUMNS = (
    "step", "t", "total_E", "E_tilde", "E_eta", "total_D", "D_eta", "N_s_rho", "u_Hs_rho",
    "ddot_Hs_rho", "grad_d_Hs", "viscous", "bulk", "mu1_term", "lambda1_term", "lambda2_term",
    "unit_norm_dev", "tangency_dev", "min_rho", "max_rho", "density_bound_margin", "cfl_observed",
    "picard_iters", "dissipation_budget",
)


@dataclass
class RunSummary:
    steps: int
    t_final: float
    completed: bool
    final_state: State
    density: object
    dissipation_budget: float
    max_unit_norm_dev: float
    max_tangency_dev: float
    max_picard_iters: int
    times: np.ndarray  # every step, not only recorded ones
    e_tilde: np.ndarray
    error: str | None = None
    reports: list[StepReport] = field(default_factory=list, repr=False)


Sink = Callable[[Record], None]


def run(initial: State, coeffs: LeslieCoefficients, config: SolverConfig, sinks: Iterable[Sink] = (),
        s: int = 3, eta1: float = 0.0, eta2: float = 0.0, record_every: int = 1,
        keep_reports: bool = False) -> RunSummary:
    """Advance ``initial`` to ``t_end``, emitting a :class:`Record` every ``record_every`` steps.

    On a solver failure the exception is re-raised with a ``partial``
    attribute holding the summary of everything completed so far.
    """
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    sinks = list(sinks)
    grid, sch = initial.grid, config.scheme
    n_steps = config.n_steps
    integ = Integrator(grid, coeffs, config)
    use_picard = config.picard is not None

    rho_lo, rho_hi = float(initial.rho.min()), float(initial.rho.max())
    mins, maxs, divs = [rho_lo], [rho_hi], [max_divergence(grid, initial.u, sch)]
    budget_rate = sobolev_time_integrand(grid, initial.u, s, sch)
    budget, divu_integral = 0.0, 0.0
    times, e_tilde, reports = [], [], []
    max_unit = max_tan = 0.0
    max_iters = 0

    def emit(k: int, state: State, report: StepReport | None) -> None:
        nonlocal max_unit, max_tan
        unit, tangency = constraint_residuals(state)
        max_unit, max_tan = max(max_unit, unit), max(max_tan, tangency)
        lower = rho_lo * math.exp(-divu_integral)
        upper = rho_hi * math.exp(divu_integral)
        margin = min((mins[-1] - lower) / lower, (upper - maxs[-1]) / upper)
        en = energy(grid, state, coeffs, s, eta1, eta2, sch)
        rec = Record(k, state, en, dissipation(grid, state, coeffs, s, eta1, eta2, sch), report,
                     unit, tangency, divu_integral, margin, budget)
        for sink in sinks:
            sink(rec)

    def summary(state: State, k: int, error: str | None) -> RunSummary:
        cert = density_bound_check(mins, divs, rho_lo, rho_hi, config.dt)
        return RunSummary(k, state.t, error is None, state, cert, budget, max_unit, max_tan,
                          max_iters, np.array(times), np.array(e_tilde), error, reports)

    state = initial
    times.append(state.t)
    e_tilde.append(perturbation_energy(grid, state, s, sch))
    emit(0, state, None)
    k = 0
    try:
        for k in range(1, n_steps + 1):
            new, report = _advance(state, integ, use_picard)
            new = new.evolve(initial.t + k * config.dt)
            max_iters = max(max_iters, report.picard_iters)
            max_unit = max(max_unit, report.unit_norm_dev)
            max_tan = max(max_tan, report.tangency_dev)
            if keep_reports:
                reports.append(report)
            mins.append(report.min_rho)
            maxs.append(report.max_rho)
            divs.append(max_divergence(grid, new.u, sch))
            divu_integral += 0.5 * config.dt * (divs[-1] + divs[-2])
            rate = sobolev_time_integrand(grid, new.u, s, sch)
            budget += 0.5 * config.dt * (rate + budget_rate)
            budget_rate = rate
            state = new
            times.append(state.t)
            e_tilde.append(perturbation_energy(grid, state, s, sch))
            if k % record_every == 0 or k == n_steps:
                emit(k, state, report)
    except (SolverError, VacuumError, FieldError) as exc:
        exc.partial = summary(state, k - 1, f"{type(exc).__name__}: {exc}")
        raise
    return summary(state, n_steps, None)
