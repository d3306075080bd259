"""Discrete WIDE functional over whole trajectories.

For a trajectory ``U^0..U^N`` on a grid with cell weight ``h^d`` the
functional is

    sum_{n=1}^{N-1} tau e^{-t_n/eps} (eps^2 rho / 2) |D2 U^n|^2
  + sum_{n=1}^{N}   tau e^{-t_{n-1/2}/eps} eps nu psi_h(D1 U^n)
  + sum_{n=0}^{N}   tau w_n e^{-t_n/eps} phi_h(U^n)

with trapezoid end weights ``w_0 = w_N = 1/2``.  ``psi_h`` and ``phi_h`` are
replaced by their Moreau-Yosida envelopes when the regularization levels are
positive.  The level ``U^0`` is always fixed; for ``rho > 0`` so is
``U^1 = U^0 + tau u1``.  Gradients are taken with respect to the remaining
("free") levels in plain Euclidean coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from ._linalg import pcg
from .discretization import Trajectory, TimeAxis, exp_weight, laplacian_apply, laplacian_matrix
from .potentials import (
    PotentialSpec,
    RegLevels,
    energy,
    energy_gradient,
    envelope_derivatives,
    prox_elliptic,
)

__all__ = [
    "ConstraintError",
    "WideParams",
    "ElResidual",
    "eval_wide",
    "grad_wide",
    "hess_vec",
    "linearize",
    "hessian_matrix",
    "el_residual",
    "first_free",
    "full_gradient",
]


class ConstraintError(ValueError):
    """Trajectory violates the initial constraints of the admissible class."""


@dataclass(frozen=True)
class WideParams:
    rho: float = 1.0
    eps: float = 0.1
    nu: float = 1.0
    G: PotentialSpec = field(default_factory=PotentialSpec)
    F: PotentialSpec = field(default_factory=PotentialSpec)
    reg: RegLevels = field(default_factory=RegLevels)

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be nonnegative, got {self.rho}")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.nu > 0:
            raise ValueError(f"nu must be positive, got {self.nu}")

    def replace(self, **changes) -> "WideParams":
        return replace(self, **changes)


def first_free(params: WideParams) -> int:
    """Index of the first unconstrained time level."""
    return 2 if params.rho > 0 else 1


@dataclass(frozen=True)
class _Weights:
    inertia: np.ndarray  # n = 1..N-1
    dissipation: np.ndarray  # n = 1..N, at t_{n-1/2}
    energy: np.ndarray  # n = 0..N, trapezoid
    node: np.ndarray  # e^{-t_n/eps}


def _weights(time: TimeAxis, params: WideParams) -> _Weights:
    tau, eps = time.tau, params.eps
    node = exp_weight(time.nodes, eps)
    mid = exp_weight(time.midpoints, eps)
    return _Weights(
        inertia=tau * node[1:-1] * eps**2 * params.rho,
        dissipation=tau * mid * eps * params.nu,
        energy=time.trapezoid() * node,
        node=node,
    )


def _check(traj: Trajectory, u0, u1, params: WideParams):
    if u0 is None:
        return
    if not traj.satisfies(u0, u1, params.rho, atol=1e-10):
        raise ConstraintError("trajectory violates the initial constraints")


def _diffs(U: np.ndarray, tau: float):
    D1 = np.diff(U, axis=0) / tau
    D2 = (U[2:] - 2 * U[1:-1] + U[:-2]) / tau**2
    return D1, D2


def _dissipation_terms(params: WideParams, D1: np.ndarray, order: int):
    """Density of the dissipation (or its envelope) and derivatives."""
    G, lam = params.G, params.reg.lam
    if lam > 0:
        vals = envelope_derivatives(G, D1, lam)
        return vals[order]
    return (G.value, G.derivative, G.second)[order](D1)


def eval_wide(traj: Trajectory, params: WideParams, u0=None, u1=None) -> float:
    """Value of the discrete (optionally regularized) WIDE functional.

    Passing ``u0``/``u1`` enables the admissibility check.
    """
    _check(traj, u0, u1, params)
    grid, time = traj.grid, traj.time
    U = traj.levels
    w = _weights(time, params)
    D1, D2 = _diffs(U, time.tau)
    total = 0.0
    if params.rho > 0:
        total += 0.5 * grid.cell * np.sum(w.inertia * np.sum(D2 * D2, axis=1))
    diss = grid.cell * np.sum(_dissipation_terms(params, D1, 0), axis=1)
    total += np.sum(w.dissipation * diss)
    live = w.energy > 0
    total += np.sum(w.energy[live] * _energy_levels(traj, params, U[live]))
    return float(total)


def _energy_levels(traj: Trajectory, params: WideParams, U: np.ndarray) -> np.ndarray:
    grid, F, mu = traj.grid, params.F, params.reg.mu
    if mu > 0:
        W = prox_elliptic(F, grid, U, mu)
        d = U - W
        return grid.cell * np.sum(d * d, axis=1) / (2 * mu) + energy(grid, F, W)
    return energy(grid, F, U)


def _energy_gradient(traj: Trajectory, params: WideParams, U: np.ndarray) -> np.ndarray:
    grid, F, mu = traj.grid, params.F, params.reg.mu
    if mu > 0:
        return (U - prox_elliptic(F, grid, U, mu)) / mu
    return energy_gradient(grid, F, U)


def full_gradient(traj: Trajectory, params: WideParams) -> np.ndarray:
    """Partial derivatives with respect to every level, constrained ones included."""
    grid, time = traj.grid, traj.time
    tau, cell = time.tau, grid.cell
    U = traj.levels
    w = _weights(time, params)
    D1, D2 = _diffs(U, tau)
    g = np.zeros_like(U)
    if params.rho > 0:
        P = (w.inertia * cell / tau**2)[:, None] * D2
        g[:-2] += P
        g[1:-1] -= 2 * P
        g[2:] += P
    Q = (w.dissipation * cell / tau)[:, None] * _dissipation_terms(params, D1, 1)
    g[1:] += Q
    g[:-1] -= Q
    live = w.energy > 0
    g[live] += (w.energy[live] * cell)[:, None] * _energy_gradient(traj, params, U[live])
    return g


def grad_wide(traj: Trajectory, params: WideParams, u0=None, u1=None) -> np.ndarray:
    """Gradient with respect to the free levels, shape ``(N + 1 - first_free, nodes)``."""
    _check(traj, u0, u1, params)
    return full_gradient(traj, params)[first_free(params):]


def linearize(traj: Trajectory, params: WideParams, curvature_floor: float = 0.0):
    """Return ``apply(V)``, the Hessian at ``traj`` acting on free-level directions.

    Curvature data are computed once, so repeated products (CG) are cheap.
    ``curvature_floor`` adds a smoothing ``delta`` to the dissipation second
    derivative of a pure power ``G`` (Newton curvature only).
    """
    grid, time = traj.grid, traj.time
    tau, cell = time.tau, grid.cell
    U = traj.levels
    start = first_free(params)
    w = _weights(time, params)
    D1, _ = _diffs(U, tau)
    if curvature_floor > 0 and params.G.kind == "power" and params.reg.lam == 0:
        G = PotentialSpec("smoothed_power", params.G.exponent, params.G.coefficient, curvature_floor)
        g2 = G.second(D1)
    else:
        g2 = _dissipation_terms(params, D1, 2)
    qd = (w.dissipation * cell / tau**2)[:, None] * g2
    pa = w.inertia * cell / tau**4
    ec = w.energy * cell
    F, mu = params.F, params.reg.mu
    if mu > 0:
        Wprox = prox_elliptic(F, grid, U, mu)
        fp = F.second(Wprox)
    else:
        fp = F.second(U)

    def energy_block(V):
        if mu > 0:
            def jac(X):
                return X + mu * (laplacian_apply(grid, X) + fp * X)

            diag = 1.0 + mu * (2 * grid.dim / grid.h**2 + fp)
            X, _, _ = pcg(jac, V, precond=lambda r: r / diag, rtol=1e-13, maxiter=5000)
            return (V - X) / mu
        return laplacian_apply(grid, V) + fp * V

    def apply(V):
        Vf = np.zeros_like(U)
        Vf[start:] = V
        out = np.zeros_like(U)
        if params.rho > 0:
            P = pa[:, None] * (Vf[2:] - 2 * Vf[1:-1] + Vf[:-2])
            out[:-2] += P
            out[1:-1] -= 2 * P
            out[2:] += P
        Q = qd * np.diff(Vf, axis=0)
        out[1:] += Q
        out[:-1] -= Q
        out += ec[:, None] * energy_block(Vf)
        return out[start:]

    return apply


def hess_vec(traj: Trajectory, direction: np.ndarray, params: WideParams) -> np.ndarray:
    """Exact Hessian-vector product of the discrete functional."""
    return linearize(traj, params)(np.asarray(direction, dtype=float))


def hessian_matrix(traj: Trajectory, params: WideParams, curvature_floor: float = 0.0) -> sp.csc_matrix:
    """Assembled sparse Hessian over the free levels (time-major ordering).

    With ``mu > 0`` the energy block uses ``-Delta_h + f'(J_mu U)`` in place
    of the exact envelope curvature, which is only suitable as a
    preconditioner.
    """
    grid, time = traj.grid, traj.time
    tau, cell, N, M = time.tau, grid.cell, time.N, grid.size
    U = traj.levels
    start = first_free(params)
    w = _weights(time, params)
    D1, _ = _diffs(U, tau)
    eye = sp.identity(M, format="csr")

    S1 = sp.diags([-np.ones(N), np.ones(N)], [0, 1], shape=(N, N + 1)) / tau
    S1 = sp.csr_matrix(S1)[:, start:]
    if curvature_floor > 0 and params.G.kind == "power" and params.reg.lam == 0:
        G = PotentialSpec("smoothed_power", params.G.exponent, params.G.coefficient, curvature_floor)
        g2 = G.second(D1)
    else:
        g2 = _dissipation_terms(params, D1, 2)
    K1 = sp.kron(S1, eye, format="csr")
    H = K1.T @ sp.diags((w.dissipation[:, None] * g2).ravel() * cell) @ K1

    if params.rho > 0:
        S2 = sp.diags(
            [np.ones(N - 1), -2 * np.ones(N - 1), np.ones(N - 1)], [0, 1, 2], shape=(N - 1, N + 1)
        ) / tau**2
        S2 = sp.csr_matrix(S2)[:, start:]
        K2 = sp.kron(S2, eye, format="csr")
        H = H + K2.T @ sp.diags(np.repeat(w.inertia * cell, M)) @ K2

    F, mu = params.F, params.reg.mu
    Uf = prox_elliptic(F, grid, U, mu) if mu > 0 else U
    fp = F.second(Uf[start:])
    A = laplacian_matrix(grid)
    ec = w.energy[start:] * cell
    blocks = sp.kron(sp.diags(ec), A) + sp.diags((ec[:, None] * fp).ravel())
    return sp.csc_matrix(H + blocks)


@dataclass
class ElResidual:
    """Discrete Euler-Lagrange residual of a trajectory.

    ``interior[k]`` is the residual at level ``interior_index[k]``.  The
    terminal fields are the stationarity equations of the last free levels,
    rescaled into consistent approximations of ``rho u''(T)`` and
    ``eps rho u'''(T) - nu xi(T)``; the ``*_stencil`` fields hold the direct
    difference-quotient versions of the same quantities.
    """

    interior: np.ndarray
    interior_index: np.ndarray
    terminal_acc: np.ndarray
    terminal_jet: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    terminal_acc_stencil: np.ndarray
    terminal_jet_stencil: np.ndarray


def el_residual(traj: Trajectory, params: WideParams) -> ElResidual:
    """Euler-Lagrange residual: the exact gradient divided by its local weight."""
    grid, time = traj.grid, traj.time
    N, tau, cell, eps = time.N, time.tau, grid.cell, params.eps
    if N < 5:
        raise ValueError(f"Euler-Lagrange stencils need N >= 5, got N={N}")
    U = traj.levels
    g = full_gradient(traj, params)
    node = np.maximum(exp_weight(time.nodes, eps), np.finfo(float).tiny)
    D1, D2 = _diffs(U, tau)
    xi = _dissipation_terms(params, D1, 1)
    eta = _energy_gradient(traj, params, U)

    if params.rho > 0:
        idx = np.arange(2, N - 1)
        acc = tau * g[N] / (cell * eps**2 * node[N - 1])
        jet = -(g[N] + g[N - 1]) / (cell * eps * node[N - 1]) + acc
    else:
        idx = np.arange(1, N)
        acc = np.zeros(grid.size)
        jet = -g[N] / (cell * eps * node[N - 1])
    interior = g[idx] / (tau * cell * node[idx])[:, None]
    D3 = (D2[-1] - D2[-2]) / tau
    return ElResidual(
        interior=interior,
        interior_index=idx,
        terminal_acc=acc,
        terminal_jet=jet,
        xi=xi,
        eta=eta,
        terminal_acc_stencil=params.rho * D2[-1],
        terminal_jet_stencil=eps * params.rho * D3 - params.nu * xi[-1],
    )
