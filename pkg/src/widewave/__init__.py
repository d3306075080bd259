"""Space-time variational solver for doubly nonlinear damped wave equations.

Trajectories are obtained by minimizing weighted inertia-dissipation-energy
(WIDE) functionals over the whole time interval; the package also ships the
causal reference steppers and the harness for the eps -> 0 and rho -> 0
limit experiments.
"""
from ._linalg import SolverError
from .config import ConfigError, load_config, parse_config
from .discretization import (
    Grid,
    TimeAxis,
    Trajectory,
    iterated_quadrature,
    laplacian_apply,
    laplacian_matrix,
    norm,
    time_derivative,
    weighted_quadrature,
)
from .functional import ConstraintError, WideParams, el_residual, eval_wide, grad_wide, hess_vec
from .limits import (
    ConvergenceTable,
    ModalData,
    SweepData,
    SweepSpec,
    apriori_report,
    error_norms,
    gamma_recovery,
    gamma_table,
    sweep,
)
from .minimizer import minimize_wide, verify_stationarity
from .potentials import (
    DomainError,
    PotentialSpec,
    RegLevels,
    moreau_envelope,
    prox_elliptic,
    prox_pointwise,
)
from .reference import (
    energy_ledger,
    modal_reference,
    modal_wide_reference,
    solve_hyperbolic,
    solve_parabolic,
    well_prepared_velocity,
)
from .serialization import read_binary, read_csv, write_binary, write_csv

__version__ = "0.1.0"

__all__ = [
    "SolverError", "ConfigError", "ConstraintError", "DomainError",
    "Grid", "TimeAxis", "Trajectory", "WideParams", "PotentialSpec", "RegLevels",
    "laplacian_apply", "laplacian_matrix", "norm", "time_derivative",
    "weighted_quadrature", "iterated_quadrature",
    "eval_wide", "grad_wide", "hess_vec", "el_residual",
    "prox_pointwise", "prox_elliptic", "moreau_envelope",
    "minimize_wide", "verify_stationarity",
    "solve_hyperbolic", "solve_parabolic", "modal_reference", "modal_wide_reference",
    "well_prepared_velocity", "energy_ledger",
    "SweepSpec", "SweepData", "ModalData", "ConvergenceTable", "sweep",
    "gamma_recovery", "gamma_table", "apriori_report", "error_norms",
    "parse_config", "load_config",
    "write_csv", "read_csv", "write_binary", "read_binary",
]
