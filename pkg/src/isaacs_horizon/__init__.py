"""Grid and Monte Carlo solvers for discounted two-player stochastic differential games."""

__version__ = "0.1.0"

from .dsl import evaluate, parse
from . import mc, verify
from .hamiltonian import HamiltonianInput, isaacs_gap, isaacs_scan, lower_hamiltonian, upper_hamiltonian
from .problem import (
    AssumptionReport,
    Bounds,
    GameProblem,
    estimate_constants,
    gamma,
    load_problem,
    load_problem_file,
    value_bounds,
)
from .solver import (
    make_grid,
    solve_finite,
    solve_infinite,
    solve_stationary,
    solve_transformed,
    write_field_csv,
)

__all__ = [
    "AssumptionReport",
    "Bounds",
    "GameProblem",
    "HamiltonianInput",
    "estimate_constants",
    "evaluate",
    "gamma",
    "isaacs_gap",
    "isaacs_scan",
    "load_problem",
    "load_problem_file",
    "lower_hamiltonian",
    "make_grid",
    "mc",
    "parse",
    "solve_finite",
    "solve_infinite",
    "solve_stationary",
    "solve_transformed",
    "upper_hamiltonian",
    "value_bounds",
    "verify",
    "write_field_csv",
]
