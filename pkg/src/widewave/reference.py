"""Causal implicit time steppers, the linear modal oracle and the energy ledger."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._linalg import SolverError, pcg
from .discretization import Grid, TimeAxis, Trajectory, laplacian_apply, norm
from .functional import WideParams
from .potentials import PotentialSpec, energy

__all__ = [
    "solve_hyperbolic",
    "solve_parabolic",
    "implicit_step",
    "well_prepared_velocity",
    "modal_reference",
    "modal_wide_reference",
    "EnergyLedger",
    "energy_ledger",
]


def _step_residual(grid, rho, nu, G, F, prev, cur, tau, W):
    acc = rho * (W - 2 * cur + prev) / tau**2 if rho > 0 else 0.0
    return acc + nu * G.derivative((W - cur) / tau) + laplacian_apply(grid, W) + F.derivative(W)


def implicit_step(
    grid: Grid,
    rho: float,
    nu: float,
    G: PotentialSpec,
    F: PotentialSpec,
    prev,
    cur,
    tau: float,
    rtol: float = 1e-10,
    max_newton: int = 50,
    max_cg: int = 2000,
):
    """One backward-Euler level: returns ``(W, residual_L2)``.

    Solves ``rho (W - 2 cur + prev)/tau^2 + nu g((W - cur)/tau) - Delta_h W
    + f(W) = 0`` (the inertia term is absent for ``rho == 0``) by damped
    Newton on the convex step functional, CG for the SPD Jacobian.
    """
    cell = grid.cell
    diag_A = 2 * grid.dim / grid.h**2
    inertia = rho / tau**2

    def merit(W):
        v = (W - cur) / tau
        m = nu * tau * np.sum(G.value(v)) * cell + energy(grid, F, W)
        if rho > 0:
            a = W - 2 * cur + prev
            m += 0.5 * inertia * cell * np.sum(a * a)
        return m

    def l2(x):
        return norm(grid, x, "L2")

    scale = 1.0 + l2(inertia * (2 * cur - prev)) + l2(laplacian_apply(grid, cur))
    target = rtol * scale
    W = 2 * cur - prev if rho > 0 else cur.copy()
    res = _step_residual(grid, rho, nu, G, F, prev, cur, tau, W)
    for _ in range(max_newton):
        if l2(res) <= target:
            return W, l2(res)
        jd = inertia + (nu / tau) * G.second((W - cur) / tau) + F.second(W)

        def jac(x):
            return jd * x + laplacian_apply(grid, x)

        d, _, _ = pcg(jac, -res, precond=lambda r: r / (jd + diag_A), rtol=1e-12, maxiter=max_cg)
        m0 = merit(W)
        slope = cell * float(res @ d)
        step = 1.0
        while step > 1e-10:
            trial = W + step * d
            if merit(trial) <= m0 + 1e-4 * step * slope or abs(step * slope) < 1e-14 * (1 + abs(m0)):
                break
            step *= 0.5
        W = W + step * d
        res = _step_residual(grid, rho, nu, G, F, prev, cur, tau, W)
    if l2(res) <= target:
        return W, l2(res)
    raise SolverError(f"implicit step did not converge (residual {l2(res):.3e})", l2(res), max_newton)


def _advance(grid, rho, nu, G, F, prev, cur, tau, rtol):
    try:
        return implicit_step(grid, rho, nu, G, F, prev, cur, tau, rtol)[0]
    except SolverError:
        # one retry with two half steps
        half = 0.5 * tau
        mid_prev = 0.5 * (prev + cur) if rho > 0 else cur
        W1, _ = implicit_step(grid, rho, nu, G, F, mid_prev, cur, half, rtol)
        W2, _ = implicit_step(grid, rho, nu, G, F, cur, W1, half, rtol)
        return W2


def solve_hyperbolic(params: WideParams, grid: Grid, time: TimeAxis, u0, u1, rtol: float = 1e-10) -> Trajectory:
    """Backward-Euler stepping of ``rho u'' + nu g(u') - Delta u + f(u) = 0``.

    The start-up level is ``U^1 = U^0 + tau u1``.  ``rho == 0`` is handed to
    :func:`solve_parabolic`.
    """
    if params.rho == 0:
        return solve_parabolic(params, grid, time, u0, rtol)
    u0 = np.asarray(u0, dtype=float)
    u1 = np.asarray(u1, dtype=float)
    tau = time.tau
    levels = np.empty((time.N + 1, grid.size))
    levels[0] = u0
    levels[1] = u0 + tau * u1
    for n in range(1, time.N):
        levels[n + 1] = _advance(grid, params.rho, params.nu, params.G, params.F, levels[n - 1], levels[n], tau, rtol)
    return Trajectory(grid, time, levels)


def solve_parabolic(params: WideParams, grid: Grid, time: TimeAxis, u0, rtol: float = 1e-10) -> Trajectory:
    """Backward-Euler stepping of ``nu g(u') - Delta u + f(u) = 0`` (inertia ignored)."""
    u0 = np.asarray(u0, dtype=float)
    levels = np.empty((time.N + 1, grid.size))
    levels[0] = u0
    for n in range(time.N):
        levels[n + 1] = _advance(grid, 0.0, params.nu, params.G, params.F, levels[n], levels[n], time.tau, rtol)
    return Trajectory(grid, time, levels)


def well_prepared_velocity(params: WideParams, grid: Grid, time: TimeAxis, u0, rtol: float = 1e-10):
    """Difference quotient of the first parabolic step from ``u0``.

    Used as ``u1`` it makes the hyperbolic start-up level coincide with the
    parabolic one, so a rho-sweep is free of the O(tau) start-up lag.
    """
    u0 = np.asarray(u0, dtype=float)
    W = _advance(grid, 0.0, params.nu, params.G, params.F, u0, u0, time.tau, rtol)
    return (W - u0) / time.tau


def _modal_amplitude(rho, nu, K, a0, a1, t):
    t = np.asarray(t, dtype=float)
    if rho == 0:
        return a0 * np.exp(-K * t / nu)
    alpha = -nu / (2 * rho)
    beta2 = K / rho - alpha**2
    if beta2 > 0:
        beta = np.sqrt(beta2)
        C, S = np.cos(beta * t), t * np.sinc(beta * t / np.pi)
    elif beta2 < 0:
        gamma = np.sqrt(-beta2)
        # sinh(gamma t)/gamma without cancellation
        C, S = np.cosh(gamma * t), np.where(gamma * t > 0, np.sinh(gamma * t) / gamma, t)
    else:
        C, S = np.ones_like(t), t
    return np.exp(alpha * t) * (a0 * C + (a1 - alpha * a0) * S)


def modal_reference(
    rho: float,
    nu: float,
    c: float,
    grid: Grid,
    time: TimeAxis,
    k: int = 1,
    amplitude: float = 1.0,
    velocity: float = 0.0,
) -> Trajectory:
    """Exact solution for ``G = v^2/2``, ``F = c u^2/2`` and single-mode data.

    ``u(t, x) = a(t) sin(k pi x / L)`` with ``rho a'' + nu a' + ((k pi/L)^2 + c) a = 0``,
    ``a(0) = amplitude`` and ``a'(0) = velocity``.  Only ``dim == 1``.
    """
    if grid.dim != 1:
        raise ValueError("modal reference is one-dimensional")
    K = (k * np.pi / grid.length) ** 2 + c
    a = _modal_amplitude(rho, nu, K, amplitude, velocity, time.nodes)
    mode = np.sin(k * np.pi * grid.coordinates()[0] / grid.length)
    return Trajectory(grid, time, a[:, None] * mode[None, :])


def _wide_modal_amplitude(rho, nu, K, eps, T, a0, a1, t):
    # Euler-Lagrange equation of the single-mode weighted functional,
    #   eps^2 rho a'''' - 2 eps rho a''' + (rho - eps nu) a'' + nu a' + K a = 0,
    # with a(0), a'(0) prescribed and the natural conditions a''(T) = 0,
    # eps rho a'''(T) = nu a'(T).  For rho = 0: -eps nu a'' + nu a' + K a = 0, a'(T) = 0.
    t = np.asarray(t, dtype=float)
    if rho == 0:
        coeffs = [-eps * nu, nu, K]
    else:
        coeffs = [eps**2 * rho, -2 * eps * rho, rho - eps * nu, nu, K]
    kappa = np.roots(coeffs).astype(complex)
    gaps = np.abs(np.subtract.outer(kappa, kappa)) + np.eye(len(kappa))
    if np.min(gaps) < 1e-8 * (1 + np.max(np.abs(kappa))):
        raise ValueError("repeated characteristic roots; perturb the parameters")
    # growing modes are anchored at T and decaying ones at 0 so nothing overflows
    anchor = np.where(kappa.real > 0, T, 0.0)

    def basis(tt, order):
        return kappa**order * np.exp(kappa * (np.asarray(tt, dtype=float)[..., None] - anchor))

    rows = [basis(0.0, 0)]
    rhs = [a0]
    if rho == 0:
        rows.append(basis(T, 1))
        rhs.append(0.0)
    else:
        rows += [basis(0.0, 1), basis(T, 2), eps * rho * basis(T, 3) - nu * basis(T, 1)]
        rhs += [a1, 0.0, 0.0]
    coef = np.linalg.solve(np.array(rows), np.array(rhs, dtype=complex))
    return (basis(t, 0) @ coef).real


def modal_wide_reference(
    rho: float,
    nu: float,
    c: float,
    eps: float,
    grid: Grid,
    time: TimeAxis,
    k: int = 1,
    amplitude: float = 1.0,
    velocity: float = 0.0,
) -> Trajectory:
    """Exact continuum WIDE minimizer for ``G = v^2/2``, ``F = c u^2/2`` and single-mode data.

    Solves the Euler-Lagrange equation of the weighted functional through its
    characteristic roots (``velocity`` is ignored when ``rho == 0``).  The
    distance between a discrete minimizer and this reference is the pure
    discretization error at fixed ``eps``.
    """
    if grid.dim != 1:
        raise ValueError("modal reference is one-dimensional")
    K = (k * np.pi / grid.length) ** 2 + c
    a = _wide_modal_amplitude(rho, nu, K, eps, time.T, amplitude, velocity, time.nodes)
    mode = np.sin(k * np.pi * grid.coordinates()[0] / grid.length)
    return Trajectory(grid, time, a[:, None] * mode[None, :])


@dataclass
class EnergyLedger:
    energy: np.ndarray
    dissipation: np.ndarray
    residual: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    @property
    def increments(self) -> np.ndarray:
        """``(E + D)_{n+1} - (E + D)_n`` for ``n = 0..N-1``."""
        return np.diff(self.energy + self.dissipation)

    def nonincreasing(self, slack: float = 1e-9, start: int = 1) -> bool:
        """Whether ``E_n + D_n`` never grows by more than ``slack`` from level ``start`` on."""
        return bool(np.all(self.increments[start:] <= slack))

    def rows(self):
        inc = np.concatenate([[0.0], self.increments])
        return [
            (n, float(e), float(d), float(r), float(i))
            for n, (e, d, r, i) in enumerate(zip(self.energy, self.dissipation, self.residual, inc))
        ]


def energy_ledger(traj: Trajectory, params: WideParams) -> EnergyLedger:
    """Kinetic plus potential energy, cumulative dissipation and their balance.

    ``E_n = rho/2 |D1 U^n|^2 + phi_h(U^n)``, ``D_n = sum_{m<=n} tau nu <g(D1 U^m), D1 U^m>``
    and ``L_n = E_n + D_n - E_0``.  The velocity at level 0 is ``D1 U^1``.
    """
    grid, time = traj.grid, traj.time
    U = traj.levels
    V = np.diff(U, axis=0) / time.tau
    kin = 0.5 * params.rho * grid.cell * np.sum(V * V, axis=1)
    kin = np.concatenate([[kin[0]], kin])
    E = kin + energy(grid, params.F, U)
    power = params.nu * grid.cell * np.sum(params.G.derivative(V) * V, axis=1)
    D = np.concatenate([[0.0], np.cumsum(time.tau * power)])
    return EnergyLedger(E, D, E + D - E[0])
