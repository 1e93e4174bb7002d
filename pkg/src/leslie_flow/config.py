"""Flat key-value run configuration.

Format::

    # comment
    [grid]
    n = 32
    [coefficients]
    mu4 = 1.0

Keys may also be written fully qualified (``grid.n = 32``) outside any
section.  Every violation is collected with its line number before the
parse fails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable

from .constitutive import CoefficientError, LeslieCoefficients, validate
from .grid import SCHEMES, S_MAX, FieldError, Grid2D
from .solver import INITIAL_KINDS, SPLITTINGS, PicardSettings, SolverConfig

EXPERIMENTS = ("simulate", "dissipation_audit", "decay_study", "constraint_study", "refinement_study")
REFINE_PARAMETERS = ("dt", "epsilon")


class ConfigError(ValueError):
    """All problems found in one config, each as ``(line, message)``."""

    def __init__(self, violations: list[tuple[int, str]]):
        self.violations = sorted(violations, key=lambda v: v[0])
        super().__init__("\n".join(_where(line) + msg for line, msg in self.violations))


def _where(line: int) -> str:
    if line > 0:
        return f"line {line}: "
    return f"override {-line}: " if line < 0 else ""


def _to_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _to_int(raw: str) -> int:
    value = float(raw)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {raw!r}")
    return int(value)


def _to_float(raw: str) -> float:
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError(f"expected a finite number, got {raw!r}")
    return value


def _optional_float(raw: str) -> float | None:
    return None if raw.lower() in ("none", "off", "") else _to_float(raw)


def _choice(options: tuple[str, ...]) -> Callable[[str], str]:
    def parse(raw: str) -> str:
        if raw not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {raw!r}")
        return raw
    return parse


def _vector(raw: str) -> tuple[float, float]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {raw!r}")
    return _to_float(parts[0]), _to_float(parts[1])


# key -> (parser, default)
SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "grid.n": (_to_int, 32),
    "grid.length": (_to_float, 2.0 * math.pi),
    "coefficients.mu1": (_to_float, 0.0),
    "coefficients.mu2": (_to_float, 0.0),
    "coefficients.mu3": (_to_float, 0.0),
    "coefficients.mu4": (_to_float, 1.0),
    "coefficients.mu5": (_to_float, 0.0),
    "coefficients.mu6": (_to_float, 0.0),
    "coefficients.xi": (_to_float, 0.0),
    "coefficients.lambda1": (_optional_float, None),
    "coefficients.lambda2": (_optional_float, None),
    "coefficients.a": (_to_float, 1.5),
    "coefficients.gamma": (_to_float, 2.0),
    "solver.dt": (_to_float, 1e-3),
    "solver.t_end": (_to_float, 0.01),
    "solver.scheme": (_choice(SCHEMES), "spectral"),
    "solver.splitting": (_choice(SPLITTINGS), "lie"),
    "solver.mollifier_eps": (_optional_float, None),
    "solver.picard": (_to_bool, False),
    "solver.picard_max_iters": (_to_int, 20),
    "solver.picard_tol": (_to_float, 1e-10),
    "solver.project_director": (_to_bool, True),
    "solver.cfl_limit": (_to_float, 0.5),
    "solver.rho_floor": (_to_float, 1e-8),
    "solver.dealias": (_to_bool, False),
    "solver.constraint_tol": (_to_float, 1e-6),
    "run.experiment": (_choice(EXPERIMENTS), "simulate"),
    "run.s": (_to_int, 3),
    "run.eta0": (_to_float, 0.1),
    "run.eta1": (_to_float, 0.0),
    "run.eta2": (_to_float, 0.0),
    "run.seed": (_to_int, 0),
    "run.record_every": (_to_int, 1),
    "run.output_dir": (str, "leslie_flow_out"),
    "run.levels": (_to_int, 2),
    "run.refine": (_choice(REFINE_PARAMETERS), "dt"),
    "run.decay_threshold": (_to_float, 1.0),
    "run.monotone_tol": (_to_float, 1e-8),
    "initial.kind": (_choice(INITIAL_KINDS[:2]), "equilibrium_perturbation"),
    "initial.amplitude": (_to_float, 0.0),
    "initial.modes": (_to_int, 2),
    "initial.director": (_vector, (1.0, 0.0)),
}

# which keys a coefficient violation message is about
_COEFFICIENT_BLAME = (
    ("lambda1", ("coefficients.lambda1",)),
    ("lambda2", ("coefficients.lambda2",)),
    ("Parodi", ("coefficients.mu2", "coefficients.mu3", "coefficients.mu5", "coefficients.mu6")),
    ("pressure amplitude", ("coefficients.a",)),
    ("adiabatic exponent", ("coefficients.gamma",)),
)


@dataclass(frozen=True)
class InitialSpec:
    kind: str = "equilibrium_perturbation"
    amplitude: float = 0.0
    modes: int = 2
    director: tuple[float, float] = (1.0, 0.0)


@dataclass(frozen=True)
class RunConfig:
    grid: Grid2D
    coefficients: LeslieCoefficients
    solver: SolverConfig
    initial: InitialSpec
    experiment: str = "simulate"
    s: int = 3
    eta0: float = 0.1
    eta1: float = 0.0
    eta2: float = 0.0
    seed: int = 0
    record_every: int = 1
    output_dir: Path = Path("leslie_flow_out")
    levels: int = 2
    refine: str = "dt"
    decay_threshold: float = 1.0
    monotone_tol: float = 1e-8
    raw: dict[str, Any] = field(default_factory=dict, repr=False, compare=False)


def _split_lines(text: str) -> Iterable[tuple[int, str, str, str | None]]:
    """Yield ``(line, key, value, error)`` for every assignment in ``text``."""
    section = ""
    for number, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]") or not body[1:-1].strip():
                yield number, "", "", f"malformed section header {body!r}"
                continue
            section = body[1:-1].strip()
            continue
        if "=" not in body:
            yield number, "", "", f"expected 'key = value', got {body!r}"
            continue
        key, value = (part.strip() for part in body.split("=", 1))
        full = key if "." in key or not section else f"{section}.{key}"
        yield number, full, value, None


def parse_config(text: str, overrides: Iterable[str] = ()) -> RunConfig:
    """Parse and validate a config, applying ``key=value`` overrides last.

    Override entries are numbered as negative lines (-1 for the first) in
    error reports.
    """
    problems: list[tuple[int, str]] = []
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}

    entries = list(_split_lines(text))
    for i, item in enumerate(overrides, start=1):
        if "=" not in item:
            problems.append((-i, f"override {item!r} must look like key=value"))
            continue
        key, value = (part.strip() for part in item.split("=", 1))
        entries.append((-i, key, value, None))

    for number, key, value, err in entries:
        if err:
            problems.append((number, err))
            continue
        if key not in SCHEMA:
            problems.append((number, f"unknown key {key!r}"))
            continue
        if key in lines and lines[key] > 0 and number > 0:
            problems.append((number, f"duplicate key {key!r} (first set on line {lines[key]})"))
            continue
        try:
            values[key] = SCHEMA[key][0](value)
        except ValueError as exc:
            problems.append((number, f"{key}: {exc}"))
            continue
        lines[key] = number

    merged = {key: values.get(key, default) for key, (_, default) in SCHEMA.items()}
    line_of = lines.get
    config = None
    try:
        config = _build(merged, line_of, problems)
    except _Abort:
        pass
    if problems or config is None:
        raise ConfigError(problems)
    return config


class _Abort(Exception):
    pass


def _build(v: dict[str, Any], line_of, problems: list[tuple[int, str]]) -> RunConfig | None:
    def fail(key: str, message: str) -> None:
        problems.append((line_of(key, 0), message))

    grid = None
    try:
        grid = Grid2D(v["grid.n"], v["grid.length"])
    except FieldError as exc:
        fail("grid.n" if "size" in str(exc) else "grid.length", str(exc))

    coeffs = None
    names = ("mu1", "mu2", "mu3", "mu4", "mu5", "mu6", "xi", "a", "gamma", "lambda1", "lambda2")
    try:
        coeffs = validate(**{n: v[f"coefficients.{n}"] for n in names})
    except CoefficientError as exc:
        for message in exc.violations:
            blamed = next((keys for prefix, keys in _COEFFICIENT_BLAME if message.startswith(prefix)), ())
            line = max((line_of(k, 0) for k in blamed), default=0)
            if line == 0:
                line = min((line_of(f"coefficients.{n}", 0) or 10**9 for n in names), default=0)
                line = 0 if line == 10**9 else line
            problems.append((line, message))
    if coeffs is not None:
        if not coeffs.dissipative():
            fail("coefficients.mu4", "coefficients are not dissipative; the solver needs "
                 "mu1 >= 0, mu4 > 0, mu4/2 + xi >= 0, lambda1 <= 0 and a nonnegative reduced stretch term")
        if coeffs.gamma <= 1.0 + 1e-6:
            fail("coefficients.gamma", f"gamma must exceed 1 for energy diagnostics, got {coeffs.gamma:g}")
        if v["run.experiment"] == "decay_study" and not coeffs.strictly_damped():
            fail("run.experiment", "decay_study needs strictly damped coefficients (lambda1 < 0)")

    solver = None
    try:
        picard = PicardSettings(v["solver.picard_max_iters"], v["solver.picard_tol"]) if v["solver.picard"] else None
        solver = SolverConfig(
            dt=v["solver.dt"], t_end=v["solver.t_end"], scheme=v["solver.scheme"],
            splitting=v["solver.splitting"], mollifier_eps=v["solver.mollifier_eps"], picard=picard,
            project_director=v["solver.project_director"], cfl_limit=v["solver.cfl_limit"],
            rho_floor=v["solver.rho_floor"], dealias=v["solver.dealias"],
            constraint_tol=v["solver.constraint_tol"],
        )
        solver.n_steps
    except ValueError as exc:
        for message in str(exc).split("; "):
            key = "solver." + message.split()[0].split("=")[0]
            fail(key if key in SCHEMA else "solver.dt", message)
        solver = None

    s = v["run.s"]
    if not 1 <= s <= S_MAX:
        fail("run.s", f"s must lie in [1, {S_MAX}], got {s}")
    eta0 = v["run.eta0"]
    if eta0 < 0:
        fail("run.eta0", f"eta0 must be non-negative, got {eta0:g}")
    for key in ("run.eta1", "run.eta2"):
        if not 0 <= v[key] <= eta0:
            fail(key, f"{key[4:]} must lie in [0, eta0={eta0:g}], got {v[key]:g}")
    if v["run.record_every"] < 1:
        fail("run.record_every", "record_every must be at least 1")
    min_levels = 3 if v["run.experiment"] == "refinement_study" else 2
    if v["run.levels"] < min_levels:
        fail("run.levels", f"{v['run.experiment']} needs at least {min_levels} levels")
    if v["run.experiment"] == "refinement_study" and v["run.refine"] == "epsilon" and v["solver.mollifier_eps"] is None:
        fail("run.refine", "epsilon refinement needs solver.mollifier_eps")
    if v["run.decay_threshold"] <= 0:
        fail("run.decay_threshold", "decay_threshold must be positive")
    if v["run.monotone_tol"] < 0:
        fail("run.monotone_tol", "monotone_tol must be non-negative")
    if v["initial.amplitude"] < 0:
        fail("initial.amplitude", "amplitude must be non-negative")
    if v["initial.modes"] < 0:
        fail("initial.modes", "modes must be non-negative")
    if v["initial.director"] == (0.0, 0.0):
        fail("initial.director", "director must be non-zero")

    if problems or grid is None or coeffs is None or solver is None:
        raise _Abort
    return RunConfig(
        grid=grid, coefficients=coeffs, solver=solver,
        initial=InitialSpec(v["initial.kind"], v["initial.amplitude"], v["initial.modes"], v["initial.director"]),
        experiment=v["run.experiment"], s=s, eta0=eta0, eta1=v["run.eta1"], eta2=v["run.eta2"],
        seed=v["run.seed"], record_every=v["run.record_every"], output_dir=Path(v["run.output_dir"]),
        levels=v["run.levels"], refine=v["run.refine"], decay_threshold=v["run.decay_threshold"],
        monotone_tol=v["run.monotone_tol"], raw=dict(v),
    )
