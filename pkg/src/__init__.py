"""
hadamard-nnls - Non-negative least squares by overparametrized gradient descent

Vanilla gradient descent on a Hadamard factorization x^L of the unknown
solves NNLS without projections and prefers small l1 norm among the
solutions. The package also ships the Lawson-Hanson and projected gradient
baselines, theory diagnostics and an experiment harness.
"""

__version__ = "0.1.0"
__description__ = "Non-negative least squares by overparametrized gradient descent"

from .active_set import compute_y_plus, solve_lawson_hanson
from .config import SolverConfig
from .experiments import ExperimentKind, ExperimentSpec, run_experiment
from .linalg import DenseMatrix
from .objective import kkt_check
from .problems import NnlsProblem, load_problem, make_problem, save_problem
from .reports import SolveReport, StopReason
from .solvers import solve_flow_rk4, solve_gd, solve_pgd, solve_sgd
from .tables import ResultTable, emit_table
from .cli import cli

__all__ = [
    "DenseMatrix",
    "NnlsProblem",
    "SolverConfig",
    "SolveReport",
    "StopReason",
    "ExperimentKind",
    "ExperimentSpec",
    "ResultTable",
    "compute_y_plus",
    "emit_table",
    "kkt_check",
    "load_problem",
    "make_problem",
    "run_experiment",
    "save_problem",
    "solve_flow_rk4",
    "solve_gd",
    "solve_lawson_hanson",
    "solve_pgd",
    "solve_sgd",
    "cli",
]
