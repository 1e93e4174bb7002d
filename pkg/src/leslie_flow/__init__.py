"""Compressible Ericksen-Leslie liquid-crystal flow on the 2-torus."""

from .constitutive import CoefficientError, LeslieCoefficients, VacuumError, validate
from .energy import dissipation, energy, energy_law_audit
from .grid import FieldError, Grid2D, SpectralTruncation
from .solver import PicardSettings, SolverConfig, make_initial, run, step
from .state import State

__all__ = [
    "CoefficientError", "FieldError", "Grid2D", "LeslieCoefficients", "PicardSettings",
    "SolverConfig", "SpectralTruncation", "State", "VacuumError", "dissipation", "energy",
    "energy_law_audit", "make_initial", "run", "step", "validate",
]
__version__ = "0.1.0"
