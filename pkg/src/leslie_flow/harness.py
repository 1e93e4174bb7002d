"""Experiment presets, certificates and on-disk artifacts.

Every experiment writes ``summary.json`` into its output directory plus one
``series.csv`` per run (in ``level_<k>/`` subdirectories for studies that
compare several runs).  The exit code is 0 when every certificate passed,
2 when one failed, 3 on a solver error and 4 on a configuration error.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .config import RunConfig
from .constitutive import VacuumError
from .energy import EnergyLawMonitor, convergence_order, eta_equivalence_bounds
from .grid import FieldError
from .solver import SERIES_COLUMNS, Record, RunSummary, SolverError, make_initial, run
from .state import State

EXIT_OK = 0
EXIT_CERTIFICATE = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4

# measured orders must reach this fraction of the nominal order
ORDER_SLACK = 0.9


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


class SeriesWriter:
    """Sink that streams :class:`Record` rows to a CSV file."""

    def __init__(self, path: Path):
        path.parent.mkdir(parents=True, exist_ok=True)
        self.path = path
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(SERIES_COLUMNS)
        self.rows = 0

    def __call__(self, record: Record) -> None:
        row = record.row()
        self._writer.writerow([format_value(row[c]) for c in SERIES_COLUMNS])
        self.rows += 1

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_series(path: Path) -> dict[str, np.ndarray]:
    """Load a ``series.csv`` back into float columns."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


@dataclass
class Certificate:
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {"passed": bool(self.passed), **self.details}


class EtaEquivalenceCheck:
    """Sink checking ``c E_tilde <= E_eta <= C E_tilde`` on every record."""

    def __init__(self, config: RunConfig, rtol: float = 1e-10):
        self.config, self.rtol = config, rtol
        self.worst = math.inf
        self.failed_at: float | None = None

    def __call__(self, record: Record) -> None:
        c, C = eta_equivalence_bounds(np.asarray(record.state.rho), self.config.coefficients,
                                      self.config.eta1, self.config.eta2)
        et, ee = record.energy.E_tilde, record.energy.E_eta
        slack = self.rtol * max(ee, 1e-300)
        margin = min(ee - c * et, C * et - ee)
        self.worst = min(self.worst, margin)
        if margin < -slack and self.failed_at is None:
            self.failed_at = record.state.t

    def certificate(self) -> Certificate:
        return Certificate("eta_equivalence", self.failed_at is None,
                           {"worst_margin": self.worst, "first_failure_t": self.failed_at})


class _Collector:
    def __init__(self):
        self.last: Record | None = None

    def __call__(self, record: Record) -> None:
        self.last = record


def initial_state(config: RunConfig) -> State:
    spec = config.initial
    return make_initial(spec.kind, config.grid, spec.amplitude, config.seed, modes=spec.modes,
                        director=spec.director, rho_floor=config.solver.rho_floor)


def nominal_order(config: RunConfig) -> int:
    if config.solver.picard is not None or config.solver.splitting == "strang":
        return 2
    return 1


def _single_run(config: RunConfig, solver_cfg, out_dir: Path, sinks=(), record_every=None) -> tuple[RunSummary, Record | None]:
    last = _Collector()
    with SeriesWriter(out_dir / "series.csv") as writer:
        summary = run(initial_state(config), config.coefficients, solver_cfg, [writer, last, *sinks],
                      s=config.s, eta1=config.eta1, eta2=config.eta2,
                      record_every=record_every or config.record_every)
    return summary, last.last


def _density_certificate(summary: RunSummary, label: str = "density_bound") -> Certificate:
    cert = summary.density
    return Certificate(label, cert.passed, {"worst_margin": cert.worst_margin, "first_failure_step": cert.first_failure})


def _run_overview(summary: RunSummary, last: Record | None) -> dict[str, Any]:
    out = {
        "steps": summary.steps,
        "t_final": summary.t_final,
        "dissipation_budget": summary.dissipation_budget,
        "max_unit_norm_dev": summary.max_unit_norm_dev,
        "max_tangency_dev": summary.max_tangency_dev,
        "max_picard_iters": summary.max_picard_iters,
    }
    if last is not None:
        out["final"] = last.row()
    return out


def _eta_sinks(config: RunConfig) -> list[EtaEquivalenceCheck]:
    return [EtaEquivalenceCheck(config)] if (config.eta1 or config.eta2) else []


def _simulate(config: RunConfig, out: Path) -> tuple[list[Certificate], dict]:
    eta = _eta_sinks(config)
    summary, last = _single_run(config, config.solver, out, eta)
    certs = [_density_certificate(summary)] + [e.certificate() for e in eta]
    if config.solver.project_director:
        certs.append(Certificate("unit_director", summary.max_unit_norm_dev <= config.solver.constraint_tol,
                                 {"max_unit_norm_dev": summary.max_unit_norm_dev}))
    return certs, _run_overview(summary, last)


def _decay_study(config: RunConfig, out: Path) -> tuple[list[Certificate], dict]:
    eta = _eta_sinks(config)
    summary, last = _single_run(config, config.solver, out, eta)
    e = summary.e_tilde
    e0 = float(e[0])
    increases = np.diff(e)
    worst = float(increases.max()) if increases.size else 0.0
    c1 = float(e.max() / e0) if e0 > 0 else 1.0
    certs = [
        Certificate("small_data", e0 <= config.decay_threshold,
                    {"E_tilde_initial": e0, "threshold": config.decay_threshold}),
        Certificate("monotone_E_tilde", worst <= config.monotone_tol * e0,
                    {"worst_step_increase": worst, "tolerance": config.monotone_tol * e0}),
        _density_certificate(summary),
        *[x.certificate() for x in eta],
    ]
    if summary.steps > 0 and e0 > 0:
        certs.append(Certificate("decay", bool(e[-1] < e0), {"E_tilde_ratio": float(e[-1] / e0)}))
    info = _run_overview(summary, last)
    info.update(C1=c1, monotone_E_tilde=certs[1].passed, E_tilde_initial=e0, E_tilde_final=float(e[-1]))
    return certs, info


def _levels(config: RunConfig) -> list[float]:
    return [config.solver.dt / 2**k for k in range(config.levels)]


def _level_config(config: RunConfig, k: int, **changes):
    dt = config.solver.dt / 2**k
    return replace(config.solver, dt=dt, **changes)


def _order_certificate(name: str, steps, errors, nominal: int, floor: float) -> tuple[Certificate, float | None]:
    errors = [float(e) for e in errors]
    if max(errors) <= floor:
        return Certificate(name, True, {"measured_order": None, "nominal_order": nominal,
                                        "note": "errors at round-off level", "errors": errors}), None
    try:
        order = convergence_order(steps, errors)
    except ValueError:
        order = -math.inf
    passed = order >= ORDER_SLACK * nominal
    return Certificate(name, passed, {"measured_order": order, "nominal_order": nominal, "errors": errors}), order


def _dissipation_audit(config: RunConfig, out: Path) -> tuple[list[Certificate], dict]:
    steps, max_r, levels, certs = [], [], [], []
    for k in range(config.levels):
        solver_cfg = _level_config(config, k)
        monitor = EnergyLawMonitor(solver_cfg.dt, config.coefficients, solver_cfg.scheme)
        summary, last = _single_run(config, solver_cfg, out / f"level_{k}",
                                    [lambda rec, m=monitor: m.push(rec.state)], record_every=1)
        audit = monitor.result()
        steps.append(solver_cfg.dt)
        max_r.append(audit.max_abs)
        certs.append(_density_certificate(summary, f"density_bound_level_{k}"))
        levels.append({"dt": solver_cfg.dt, "max_abs_residual": audit.max_abs, **_run_overview(summary, last)})
    cert, order = _order_certificate("energy_law_order", steps, max_r, nominal_order(config), 1e-13)
    return [cert, *certs], {"levels": levels, "measured_order": order, "nominal_order": nominal_order(config)}


def _constraint_study(config: RunConfig, out: Path) -> tuple[list[Certificate], dict]:
    steps, devs, levels, certs = [], [], [], []
    for k in range(config.levels):
        solver_cfg = _level_config(config, k, project_director=False)
        summary, last = _single_run(config, solver_cfg, out / f"level_{k}")
        steps.append(solver_cfg.dt)
        dev = float(last.unit_norm_dev) if last is not None else 0.0
        devs.append(dev)
        certs.append(_density_certificate(summary, f"density_bound_level_{k}"))
        levels.append({"dt": solver_cfg.dt, "unit_norm_dev_final": dev, **_run_overview(summary, last)})
    cert, order = _order_certificate("constraint_drift_order", steps, devs, nominal_order(config), 1e-13)
    projected, last = _single_run(config, replace(config.solver, project_director=True), out / "projected")
    proj = Certificate("projected_unit_director", projected.max_unit_norm_dev <= config.solver.constraint_tol,
                       {"max_unit_norm_dev": projected.max_unit_norm_dev})
    return [cert, proj, *certs], {"levels": levels, "measured_order": order, "projected": _run_overview(projected, last)}


def _refinement_study(config: RunConfig, out: Path) -> tuple[list[Certificate], dict]:
    finals, params, levels, certs = [], [], [], []
    for k in range(config.levels):
        if config.refine == "dt":
            solver_cfg = _level_config(config, k)
            params.append(solver_cfg.dt)
        else:
            eps = config.solver.mollifier_eps / 2**k
            solver_cfg = replace(config.solver, mollifier_eps=eps)
            params.append(eps)
        summary, last = _single_run(config, solver_cfg, out / f"level_{k}")
        finals.append(summary.final_state)
        certs.append(_density_certificate(summary, f"density_bound_level_{k}"))
        levels.append({config.refine: params[-1], **_run_overview(summary, last)})
    diffs = [a.max_difference(b) for a, b in zip(finals, finals[1:])]
    info: dict[str, Any] = {"levels": levels, "successive_differences": diffs}
    if config.refine == "dt":
        cert, order = _order_certificate("self_convergence_order", params[:-1], diffs, nominal_order(config), 1e-13)
        info["measured_order"] = order
    else:
        cert = Certificate("epsilon_differences_nonincreasing",
                           all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(diffs, diffs[1:])),
                           {"differences": diffs})
    return [cert, *certs], info


EXPERIMENT_RUNNERS = {
    "simulate": _simulate,
    "decay_study": _decay_study,
    "dissipation_audit": _dissipation_audit,
    "constraint_study": _constraint_study,
    "refinement_study": _refinement_study,
}


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def write_summary(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(config: RunConfig, output_dir: Path | None = None) -> int:
    """Run the configured experiment, write artifacts and return the exit code."""
    out = Path(output_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload: dict[str, Any] = {"experiment": config.experiment, "seed": config.seed,
                               "config": dict(config.raw), "error": None}
    try:
        certs, info = EXPERIMENT_RUNNERS[config.experiment](config, out)
    except (SolverError, VacuumError, FieldError) as exc:
        partial = getattr(exc, "partial", None)
        payload["error"] = {"type": type(exc).__name__, "message": str(exc)}
        if partial is not None:
            payload["partial"] = _run_overview(partial, None)
        payload["exit_code"] = EXIT_SOLVER
        write_summary(out / "summary.json", payload)
        return EXIT_SOLVER
    payload.update(info)
    payload["certificates"] = {c.name: c.as_dict() for c in certs}
    code = EXIT_OK if all(c.passed for c in certs) else EXIT_CERTIFICATE
    payload["exit_code"] = code
    write_summary(out / "summary.json", payload)
    return code
