"""Immutable snapshot of the evolved fields at one time level."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import FieldError, Grid2D, check_field


def _frozen(grid: Grid2D, values, name: str, ndim: int) -> np.ndarray:
    arr = np.array(check_field(grid, values, name), dtype=float, copy=True)
    if arr.ndim != ndim:
        raise FieldError(f"{name} must have {ndim} dimensions, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class State:
    """Density, velocity, director and material director rate at time ``t``.

    Arrays are copied on construction and marked read-only, so a state can be
    shared freely between the stepper and diagnostics.
    """

    grid: Grid2D
    t: float
    rho: np.ndarray
    u: np.ndarray
    d: np.ndarray
    ddot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "rho", _frozen(self.grid, self.rho, "rho", 2))
        for name in ("u", "d", "ddot"):
            object.__setattr__(self, name, _frozen(self.grid, getattr(self, name), name, 3))

    def evolve(self, t: float, **fields) -> "State":
        return replace(self, t=t, **fields)

    def fields(self) -> dict[str, np.ndarray]:
        return {"rho": self.rho, "u": self.u, "d": self.d, "ddot": self.ddot}

    def max_difference(self, other: "State") -> float:
        """Largest absolute nodal difference over all four fields."""
        return max(float(np.max(np.abs(a - b)))
                   for a, b in zip(self.fields().values(), other.fields().values()))
