"""Quasi-static tether shape and tension for a drone tethered to a ground station.

Two solvers share one problem description: a closed-form catenary with a
uniform drag field, and a lumped-mass chain of rigid segments solved by
Newton's method.
"""

__version__ = "0.1.0"

from .analytical import CatenaryParams, solve_catenary, solve_with_drag
from .core import Method, PlanarBoundary, SolveDiagnostics, TetherSolution, TetherSpec
from .errors import (
    AllGuessesFailed,
    DegenerateGeometry,
    InputError,
    NonPhysical,
    SolverError,
    TetherError,
    Unreachable,
)
from .numerical import Environment, EquilibriumSolver, LumpedState, discretize, solve_equilibrium
from .simulator import TetherSimulator

__all__ = [
    "AllGuessesFailed",
    "CatenaryParams",
    "DegenerateGeometry",
    "Environment",
    "EquilibriumSolver",
    "InputError",
    "LumpedState",
    "Method",
    "NonPhysical",
    "PlanarBoundary",
    "SolveDiagnostics",
    "SolverError",
    "TetherError",
    "TetherSimulator",
    "TetherSolution",
    "TetherSpec",
    "Unreachable",
    "discretize",
    "solve_catenary",
    "solve_equilibrium",
    "solve_with_drag",
]
