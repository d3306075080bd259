"""Uniform Dirichlet grids, time axes, finite-difference stencils and quadratures.

Fields are plain 1-D numpy arrays over the interior nodes of a grid (row-major
for ``dim == 2``).  Trajectories stack ``N + 1`` fields in a 2-D array whose
first axis is time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Grid",
    "TimeAxis",
    "Trajectory",
    "laplacian_apply",
    "laplacian_matrix",
    "norm",
    "time_derivative",
    "time_weights",
    "weighted_quadrature",
    "iterated_quadrature",
    "UNDERFLOW",
]

#: exponential weights below this value are treated as exact zeros
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``(0, length)**dim`` with homogeneous Dirichlet data.

    Only the ``n_per_axis**dim`` interior nodes carry unknowns.
    """

    dim: int = 1
    n_per_axis: int = 16
    length: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n_per_axis < 1:
            raise ValueError(f"n_per_axis must be at least 1, got {self.n_per_axis}")
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")

    @property
    def h(self) -> float:
        return self.length / (self.n_per_axis + 1)

    @property
    def size(self) -> int:
        return self.n_per_axis**self.dim

    @property
    def cell(self) -> float:
        """Quadrature weight ``h**dim`` of one node."""
        return self.h**self.dim

    def axis(self) -> np.ndarray:
        return self.h * np.arange(1, self.n_per_axis + 1)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Flattened node coordinates, one array per axis."""
        x = self.axis()
        if self.dim == 1:
            return (x,)
        X, Y = np.meshgrid(x, x, indexing="ij")
        return (X.ravel(), Y.ravel())

    @cached_property
    def _laplacian(self) -> sp.csr_matrix:
        n = self.n_per_axis
        T = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
        if self.dim == 2:
            eye = sp.identity(n)
            T = sp.kron(T, eye) + sp.kron(eye, T)
        return sp.csr_matrix(T / self.h**2)


@dataclass(frozen=True)
class TimeAxis:
    T: float = 1.0
    N: int = 32

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"final time must be positive, got {self.T}")
        if self.N < 2:
            raise ValueError(f"need at least 2 time steps, got {self.N}")

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        t = self.tau * np.arange(self.N + 1)
        t[-1] = self.T
        return t

    @property
    def midpoints(self) -> np.ndarray:
        """``t_{n-1/2}`` for ``n = 1..N``."""
        return self.tau * (np.arange(1, self.N + 1) - 0.5)

    def trapezoid(self) -> np.ndarray:
        w = np.full(self.N + 1, self.tau)
        w[0] = w[-1] = 0.5 * self.tau
        return w


@dataclass
class Trajectory:
    """Space-time field ``levels[n] = U^n`` for ``n = 0..N``."""

    grid: Grid
    time: TimeAxis
    levels: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        expected = (self.time.N + 1, self.grid.size)
        if self.levels.shape != expected:
            raise ValueError(f"levels have shape {self.levels.shape}, expected {expected}")

    @classmethod
    def zeros(cls, grid: Grid, time: TimeAxis) -> "Trajectory":
        return cls(grid, time, np.zeros((time.N + 1, grid.size)))

    @classmethod
    def from_function(cls, grid: Grid, time: TimeAxis, fn) -> "Trajectory":
        """Sample ``fn(t, *coords)`` on every time level."""
        coords = grid.coordinates()
        levels = np.array([np.broadcast_to(fn(t, *coords), (grid.size,)) for t in time.nodes])
        return cls(grid, time, levels)

    def copy(self) -> "Trajectory":
        return Trajectory(self.grid, self.time, self.levels.copy())

    def with_levels(self, levels: np.ndarray) -> "Trajectory":
        return Trajectory(self.grid, self.time, levels)

    def satisfies(self, u0: np.ndarray, u1: np.ndarray | None, rho: float, atol: float = 1e-12) -> bool:
        """Check the initial constraints of the admissible class."""
        U = self.levels
        scale = 1.0 + np.max(np.abs(U))
        ok = np.allclose(U[0], u0, rtol=0, atol=atol * scale)
        if rho > 0 and u1 is not None:
            v = (U[1] - U[0]) / self.time.tau
            ok = ok and np.allclose(v, u1, rtol=0, atol=atol * scale / self.time.tau)
        return bool(ok)


def _check_field(grid: Grid, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.size:
        raise ValueError(f"field has {values.shape[-1]} nodes, grid has {grid.size}")
    return values


def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse SPD matrix of ``-Delta_h`` (three/five-point stencil)."""
    return grid._laplacian


def laplacian_apply(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Apply ``-Delta_h`` to a field, or to every row of a stack of fields."""
    values = _check_field(grid, values)
    A = grid._laplacian
    if values.ndim == 1:
        return A @ values
    return (A @ values.T).T


def norm(grid: Grid, values: np.ndarray, kind: str = "L2", p: float = 2.0) -> float:
    """Discrete L2, Lp or H^1_0 norm of a field.

    ``kind`` is one of ``"L2"``, ``"Lp"`` or ``"H10"``; ``p`` is only read for
    ``"Lp"`` and must lie in ``[2, 4)``.
    """
    values = _check_field(grid, values)
    if kind == "L2":
        return float(np.sqrt(grid.cell * np.sum(values**2)))
    if kind == "Lp":
        if not 2 <= p < 4:
            raise ValueError(f"Lp norm needs 2 <= p < 4, got p={p}")
        return float((grid.cell * np.sum(np.abs(values) ** p)) ** (1.0 / p))
    if kind == "H10":
        quad = float(values @ laplacian_apply(grid, values)) * grid.cell
        return float(np.sqrt(max(quad, 0.0)))
    raise ValueError(f"unknown norm kind {kind!r}")


def time_derivative(traj: Trajectory, order: int, n: int) -> np.ndarray:
    """Backward/centred difference quotients of a trajectory at level ``n``.

    order 1: ``(U^n - U^{n-1})/tau`` for ``1 <= n <= N``
    order 2: ``(U^{n+1} - 2U^n + U^{n-1})/tau^2`` for ``1 <= n <= N-1``
    order 3: ``(D2 U^n - D2 U^{n-1})/tau`` for ``2 <= n <= N-1``
    """
    U, tau, N = traj.levels, traj.time.tau, traj.time.N
    if order == 1:
        if not 1 <= n <= N:
            raise IndexError(f"first difference needs 1 <= n <= {N}, got {n}")
        return (U[n] - U[n - 1]) / tau
    if order == 2:
        if not 1 <= n <= N - 1:
            raise IndexError(f"second difference needs 1 <= n <= {N - 1}, got {n}")
        return (U[n + 1] - 2 * U[n] + U[n - 1]) / tau**2
    if order == 3:
        if not 2 <= n <= N - 1:
            raise IndexError(f"third difference needs 2 <= n <= {N - 1}, got {n}")
        return (U[n + 1] - 3 * U[n] + 3 * U[n - 1] - U[n - 2]) / tau**3
    raise ValueError(f"order must be 1, 2 or 3, got {order}")


def exp_weight(t: np.ndarray, eps: float) -> np.ndarray:
    w = np.exp(-np.asarray(t, dtype=float) / eps)
    w[w < UNDERFLOW] = 0.0
    return w


def time_weights(time: TimeAxis, weight: str | None, eps: float | None = None) -> np.ndarray:
    """Node values of a quadrature weight: ``"exp"``, ``"T-t"`` or ``None``."""
    t = time.nodes
    if weight is None or weight == "none":
        return np.ones_like(t)
    if weight == "exp":
        if eps is None or not eps > 0:
            raise ValueError("exponential weight needs eps > 0")
        return exp_weight(t, eps)
    if weight == "T-t":
        return time.T - t
    raise ValueError(f"unknown weight {weight!r}")


def weighted_quadrature(samples, time: TimeAxis, weight: str | None = None, eps: float | None = None) -> float:
    """Trapezoid rule of ``weight(t) * f(t)`` with the weight sampled at the nodes."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != time.N + 1:
        raise ValueError(f"expected {time.N + 1} samples, got {samples.shape[0]}")
    w = time.trapezoid() * time_weights(time, weight, eps)
    mask = w != 0
    return float(np.sum(w[mask] * samples[mask]))


def iterated_quadrature(samples, time: TimeAxis) -> float:
    """Trapezoid approximation of ``int_0^T int_0^t f(s) ds dt``."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != time.N + 1:
        raise ValueError(f"expected {time.N + 1} samples, got {samples.shape[0]}")
    inner = np.concatenate([[0.0], np.cumsum(0.5 * time.tau * (samples[1:] + samples[:-1]))])
    return float(np.sum(time.trapezoid() * inner))
