"""Newton-CG minimization of the discrete WIDE functional."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._linalg import SolverError, pcg
from .discretization import Grid, TimeAxis, Trajectory, exp_weight
from .functional import (
    WideParams,
    el_residual,
    eval_wide,
    first_free,
    grad_wide,
    hessian_matrix,
    linearize,
)

__all__ = [
    "LineSearchError",
    "MinimizeStats",
    "MinimizeResult",
    "StationarityReport",
    "initial_guess",
    "stationarity_norm",
    "minimize_wide",
    "verify_stationarity",
]

log = logging.getLogger(__name__)


class LineSearchError(SolverError):
    """Backtracking failed along a descent direction."""


@dataclass
class MinimizeStats:
    iterations: int = 0
    cg_iterations: int = 0
    grad_norm: float = float("nan")
    initial_grad_norm: float = float("nan")
    tolerance: float = float("nan")
    value: float = float("nan")
    converged: bool = False
    values: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)


@dataclass
class MinimizeResult:
    traj: Trajectory
    stats: MinimizeStats


def initial_guess(grid: Grid, time: TimeAxis, u0, u1, rho: float) -> Trajectory:
    """``u0`` extended constantly in time, plus the ramp ``t u1`` when ``rho > 0``."""
    u0 = np.asarray(u0, dtype=float)
    levels = np.tile(u0, (time.N + 1, 1))
    if rho > 0:
        levels = levels + time.nodes[:, None] * np.asarray(u1, dtype=float)[None, :]
        levels[1] = u0 + time.tau * np.asarray(u1, dtype=float)
    return Trajectory(grid, time, levels)


def _level_scale(traj: Trajectory, params: WideParams) -> np.ndarray:
    start = first_free(params)
    node = exp_weight(traj.time.nodes, params.eps)[start:]
    return traj.time.tau * traj.grid.cell * np.maximum(node, np.finfo(float).tiny)


def stationarity_norm(traj: Trajectory, params: WideParams, grad=None) -> float:
    """Discrete L2(0,T;L2) norm of the gradient divided by its local weight.

    Each free level's gradient is rescaled by ``tau h^d e^{-t_n/eps}`` so the
    norm measures the Euler-Lagrange residual uniformly in time.
    """
    if grad is None:
        grad = grad_wide(traj, params)
    r = grad / _level_scale(traj, params)[:, None]
    return float(np.sqrt(traj.time.tau * traj.grid.cell * np.sum(r * r)))


def _preconditioner(traj, params, kind, curvature_floor):
    H = hessian_matrix(traj, params, curvature_floor=curvature_floor)
    d = H.diagonal()
    if kind == "jacobi":
        return lambda r: r / d.reshape(r.shape)
    if kind != "factorized":
        raise ValueError(f"unknown preconditioner {kind!r}")
    s = 1.0 / np.sqrt(d)
    S = sp.diags(s)
    lu = spla.splu(sp.csc_matrix(S @ H @ S))
    return lambda r: (s * lu.solve(s * r.ravel())).reshape(r.shape)


def minimize_wide(
    params: WideParams,
    grid: Grid,
    time: TimeAxis,
    u0,
    u1=None,
    grad_tol: float | None = None,
    rtol: float = 1e-9,
    max_newton: int = 50,
    max_cg: int = 5000,
    precond: str = "auto",
    init=None,
    curvature_floor: float = 1e-6,
    stall_steps: int = 6,
) -> MinimizeResult:
    """Damped Newton-CG with Armijo backtracking.

    Converged when :func:`stationarity_norm` drops below ``grad_tol`` or, if
    that is None, below ``rtol`` times its initial value.  ``init`` (levels
    array or trajectory) overrides the default initial guess on the free
    levels.  Exceeding ``max_newton``, or ``stall_steps`` consecutive steps
    without halving the best gradient norm (roundoff floor), returns the last
    iterate with ``stats.converged = False``.  ``precond`` is ``"factorized"``
    (sparse LU of the scaled assembled Hessian), ``"jacobi"`` or ``"auto"``,
    which factorizes in 1D and uses Jacobi in 2D where the LU fill-in grows.
    """
    u0 = np.asarray(u0, dtype=float)
    if u1 is None:
        u1 = np.zeros_like(u0)
    u1 = np.asarray(u1, dtype=float)
    if precond == "auto":
        precond = "factorized" if grid.dim == 1 else "jacobi"
    traj = initial_guess(grid, time, u0, u1, params.rho)
    start = first_free(params)
    if init is not None:
        levels = init.levels if isinstance(init, Trajectory) else np.asarray(init, dtype=float)
        traj.levels[start:] = levels[start:]

    scale = _level_scale(traj, params)[:, None]
    tau_cell = time.tau * grid.cell

    def el_norm(r):
        r = r / scale
        return float(np.sqrt(tau_cell * np.sum(r * r)))

    stats = MinimizeStats()
    g = grad_wide(traj, params)
    gnorm = el_norm(g)
    value = eval_wide(traj, params)
    stats.initial_grad_norm = gnorm
    tol = grad_tol if grad_tol is not None else rtol * gnorm
    stats.tolerance = tol
    stats.values.append(value)
    stats.grad_norms.append(gnorm)

    best, since_best = gnorm, 0
    for it in range(max_newton + 1):
        if gnorm <= tol:
            stats.converged = True
            break
        if it == max_newton or since_best >= stall_steps:
            break
        hv = linearize(traj, params, curvature_floor=curvature_floor)
        M = _preconditioner(traj, params, precond, curvature_floor)
        d, k, _ = pcg(hv, -g, precond=M, rtol=1e-10, atol=0.1 * tol, maxiter=max_cg, norm=el_norm)
        stats.cg_iterations += k

        slope = float(np.sum(g * d))
        if not slope < 0:
            raise LineSearchError(f"Newton direction is not a descent direction (slope {slope:.3e})")
        step = 1.0
        while True:
            trial = traj.copy()
            trial.levels[start:] += step * d
            tval = eval_wide(trial, params)
            if tval <= value + 1e-4 * step * slope:
                tg = grad_wide(trial, params)
                break
            if step * abs(slope) <= 64 * np.finfo(float).eps * max(abs(value), 1e-300):
                # decrease below roundoff of the value: fall back on the gradient
                tg = grad_wide(trial, params)
                if el_norm(tg) < gnorm:
                    break
            step *= 0.5
            if step < 1e-12:
                raise LineSearchError("backtracking line search failed", residual=gnorm, iterations=it)
        traj, g, value = trial, tg, tval
        gnorm = el_norm(g)
        if gnorm < 0.5 * best:
            best, since_best = gnorm, 0
        else:
            since_best += 1
        stats.iterations = it + 1
        stats.values.append(value)
        stats.grad_norms.append(gnorm)
        log.debug("newton %d: value %.15e grad %.3e step %.3g cg %d", it + 1, value, gnorm, step, k)

    stats.grad_norm = gnorm
    stats.value = value
    if not stats.converged:
        log.warning("minimize_wide stopped at grad norm %.3e > tol %.3e", gnorm, tol)
    return MinimizeResult(traj, stats)


@dataclass
class StationarityReport:
    max_interior: float
    terminal_acc: float
    terminal_jet: float
    tol: float

    @property
    def passed(self) -> bool:
        return max(self.max_interior, self.terminal_acc, self.terminal_jet) <= self.tol

    def as_dict(self) -> dict:
        return {
            "max_interior": self.max_interior,
            "terminal_acc": self.terminal_acc,
            "terminal_jet": self.terminal_jet,
            "tol": self.tol,
            "passed": self.passed,
        }


def verify_stationarity(traj: Trajectory, params: WideParams, tol: float = 1e-8) -> StationarityReport:
    """Discrete L2 norms of the Euler-Lagrange residual pieces against ``tol``."""
    res = el_residual(traj, params)
    cell = traj.grid.cell

    def l2(x):
        return float(np.sqrt(cell * np.sum(x * x)))

    interior = max((l2(r) for r in res.interior), default=0.0)
    return StationarityReport(interior, l2(res.terminal_acc), l2(res.terminal_jet), tol)
