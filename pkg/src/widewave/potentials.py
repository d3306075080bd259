"""Convex scalar densities, their resolvents and Moreau-Yosida envelopes.

The dissipation density ``G`` and the energy density ``F`` share one
description, :class:`PotentialSpec`.  All evaluation routines are
vectorised over numpy arrays.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._linalg import SolverError, pcg
from .discretization import Grid, laplacian_apply

__all__ = [
    "DomainError",
    "PotentialSpec",
    "RegLevels",
    "evaluate",
    "prox_pointwise",
    "prox_elliptic",
    "moreau_envelope",
    "envelope_derivatives",
    "energy",
    "energy_gradient",
]

KINDS = ("power", "smoothed_power")


class DomainError(ValueError):
    """Evaluation outside the smoothness domain of a density."""


@dataclass(frozen=True)
class PotentialSpec:
    """``c |v|^q / q`` (``power``) or its smoothed variant.

    ``smoothed_power`` uses ``c ((v^2 + delta^2)^{q/2} - delta^q) / q`` which
    is twice differentiable at the origin.
    """

    kind: str = "power"
    exponent: float = 2.0
    coefficient: float = 1.0
    smoothing: float = 1e-6

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if not self.exponent >= 1:
            raise ValueError(f"exponent must be >= 1, got {self.exponent}")
        if self.coefficient == 0:
            raise ValueError("coefficient must be nonzero")
        if self.smoothing < 0:
            raise ValueError(f"smoothing must be nonnegative, got {self.smoothing}")
        if self.exponent >= 4:
            warnings.warn(
                f"exponent {self.exponent} lies outside the growth range p < 4", stacklevel=2
            )

    @property
    def is_quadratic(self) -> bool:
        return self.exponent == 2 and (self.kind == "power" or self.smoothing == 0)

    def value(self, v):
        v = np.asarray(v, dtype=float)
        q, c = self.exponent, self.coefficient
        if self.kind == "power":
            return c * np.abs(v) ** q / q
        d = self.smoothing
        return c * ((v * v + d * d) ** (q / 2) - d**q) / q

    def derivative(self, v):
        v = np.asarray(v, dtype=float)
        q, c = self.exponent, self.coefficient
        if self.kind == "power":
            if q == 2:
                return c * v
            return c * np.sign(v) * np.abs(v) ** (q - 1)
        d = self.smoothing
        return c * (v * v + d * d) ** (q / 2 - 1) * v

    def second(self, v):
        v = np.asarray(v, dtype=float)
        q, c = self.exponent, self.coefficient
        if self.kind == "power":
            if q == 2:
                return np.full_like(v, c)
            if q < 2 and np.any(v == 0):
                raise DomainError(f"second derivative of |v|^{q} is unbounded at v = 0")
            with np.errstate(divide="ignore"):
                return c * (q - 1) * np.abs(v) ** (q - 2)
        d = self.smoothing
        if q < 2 and d == 0 and np.any(v == 0):
            raise DomainError(f"second derivative of |v|^{q} is unbounded at v = 0")
        s = v * v + d * d
        return c * (s ** (q / 2 - 1) + (q - 2) * v * v * s ** (q / 2 - 2))


@dataclass(frozen=True)
class RegLevels:
    """Moreau-Yosida levels; a zero level switches that regularization off."""

    lam: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        if self.lam < 0 or self.mu < 0:
            raise ValueError(f"regularization levels must be nonnegative, got {self}")


def evaluate(spec: PotentialSpec, v, order: int = 0):
    """Density (order 0), derivative (1) or second derivative (2)."""
    if order == 0:
        return spec.value(v)
    if order == 1:
        return spec.derivative(v)
    if order == 2:
        return spec.second(v)
    raise ValueError(f"order must be 0, 1 or 2, got {order}")


def prox_pointwise(spec: PotentialSpec, v, lam: float, tol: float = 1e-13, maxiter: int = 200):
    """Solve ``w + lam * g(w) = v`` elementwise.

    Newton's method safeguarded by bisection on ``[min(0, v), max(0, v)]``;
    the bracket holds the root because ``g`` is monotone with ``g(0) = 0``.
    """
    if not lam > 0:
        raise ValueError(f"prox level must be positive, got {lam}")
    v = np.asarray(v, dtype=float)
    c, q = spec.coefficient, spec.exponent
    if spec.is_quadratic:
        return v / (1.0 + lam * c)
    if spec.kind == "power" and q == 1:
        return np.sign(v) * np.maximum(np.abs(v) - lam * c, 0.0)

    scalar = v.ndim == 0
    v = np.atleast_1d(v)
    lo, hi = np.minimum(v, 0.0), np.maximum(v, 0.0)
    w = v.copy()
    scale = np.maximum(1.0, np.abs(v))
    for _ in range(maxiter):
        res = w + lam * spec.derivative(w) - v
        active = np.abs(res) > tol * scale
        if not active.any():
            break
        # root lies below w where the residual is positive
        hi = np.where(res > 0, w, hi)
        lo = np.where(res < 0, w, lo)
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = 1.0 + lam * spec.second(np.where(w == 0, np.finfo(float).tiny, w))
            step = w - res / slope
        bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
        step = np.where(bad, 0.5 * (lo + hi), step)
        collapsed = (hi - lo) <= 4 * np.finfo(float).eps * scale
        w = np.where(active & ~collapsed, step, w)
        if not (active & ~collapsed).any():
            break
    else:
        res = w + lam * spec.derivative(w) - v
        raise SolverError(
            f"scalar prox did not converge (max residual {np.max(np.abs(res)):.3e})",
            residual=float(np.max(np.abs(res))),
            iterations=maxiter,
        )
    return w[0] if scalar else w


def energy(grid: Grid, F: PotentialSpec, u):
    """``phi_h(u) = 1/2 |u|_{H^1_0}^2 + h^d sum F(u)``; rowwise for stacks."""
    u = np.asarray(u, dtype=float)
    Au = laplacian_apply(grid, u)
    return grid.cell * (0.5 * np.sum(u * Au, axis=-1) + np.sum(F.value(u), axis=-1))


def energy_gradient(grid: Grid, F: PotentialSpec, u):
    """``-Delta_h u + f(u)`` (the L2 gradient of :func:`energy`)."""
    return laplacian_apply(grid, u) + F.derivative(u)


def prox_elliptic(
    F: PotentialSpec,
    grid: Grid,
    u,
    mu: float,
    rtol: float = 1e-12,
    cg_rtol: float = 1e-12,
    max_newton: int = 50,
    max_cg: int = 2000,
):
    """Resolvent of the energy: solve ``w + mu(-Delta_h w + f(w)) = u``.

    ``u`` may be a single field or a stack of fields (one resolvent per row).
    Damped Newton on the strictly convex functional
    ``1/2 |w - u|^2 + mu * phi_h(w)`` with a Jacobi-preconditioned CG inner
    solve.  Stops once every row has discrete L2 residual at most
    ``rtol * (1 + |u|_L2)``.
    """
    if not mu > 0:
        raise ValueError(f"resolvent level must be positive, got {mu}")
    u = np.asarray(u, dtype=float)
    diag_A = 2 * grid.dim / grid.h**2

    def l2(x):
        return np.sqrt(grid.cell * np.sum(x * x, axis=-1))

    def residual(w):
        return w + mu * energy_gradient(grid, F, w) - u

    def merit(w):
        d = w - u
        return np.sum(0.5 * grid.cell * np.sum(d * d, axis=-1) + mu * energy(grid, F, w))

    target = rtol * (1.0 + l2(u))
    w = u / (1.0 + mu * diag_A)
    res = residual(w)
    for _ in range(max_newton):
        if np.all(l2(res) <= target):
            return w
        fp = F.second(w)

        def jac(x):
            return x + mu * (laplacian_apply(grid, x) + fp * x)

        precond_diag = 1.0 + mu * (diag_A + fp)
        try:
            d, _, _ = pcg(jac, -res, precond=lambda r: r / precond_diag, rtol=cg_rtol, maxiter=max_cg)
        except SolverError as exc:
            raise SolverError(f"elliptic resolvent: {exc}", exc.residual, exc.iterations) from exc
        m0 = merit(w)
        slope = grid.cell * float(np.sum(res * d))
        step = 1.0
        while step > 1e-10:
            trial = w + step * d
            if merit(trial) <= m0 + 1e-4 * step * slope or abs(slope) < 1e-15 * (1 + abs(m0)):
                break
            step *= 0.5
        w = w + step * d
        res = residual(w)
    if np.all(l2(res) <= target):
        return w
    raise SolverError(
        f"elliptic resolvent did not converge (residual {np.max(l2(res)):.3e})",
        residual=float(np.max(l2(res))),
        iterations=max_newton,
    )


def envelope_derivatives(spec: PotentialSpec, v, lam: float):
    """Value, first and second derivative of the scalar envelope ``G_lam``.

    Uses ``G_lam' = (v - w)/lam = g(w)`` and ``G_lam'' = g'(w)/(1 + lam g'(w))``
    with ``w`` the resolvent of ``v``.
    """
    v = np.asarray(v, dtype=float)
    w = prox_pointwise(spec, v, lam)
    gp = spec.second(w)
    value = (v - w) ** 2 / (2 * lam) + spec.value(w)
    return value, (v - w) / lam, gp / (1.0 + lam * gp)


def moreau_envelope(spec: PotentialSpec, v, level: float, grid: Grid | None = None, role: str = "psi"):
    """Moreau-Yosida envelope at ``level``.

    ``role="psi"``: the pointwise envelope of the density, summed with weight
    ``h**dim`` when a grid is supplied.  ``role="phi"``: the envelope of the
    full energy ``phi_h`` in the discrete L2 metric (``grid`` required); rows
    of a stack are treated independently.
    """
    if not level > 0:
        raise ValueError(f"envelope level must be positive, got {level}")
    v = np.asarray(v, dtype=float)
    if role == "psi":
        w = prox_pointwise(spec, v, level)
        vals = (v - w) ** 2 / (2 * level) + spec.value(w)
        if grid is None:
            return vals
        return grid.cell * np.sum(vals, axis=-1)
    if role == "phi":
        if grid is None:
            raise ValueError("the energy envelope needs a grid")
        w = prox_elliptic(spec, grid, v, level)
        d = v - w
        return grid.cell * np.sum(d * d, axis=-1) / (2 * level) + energy(grid, spec, w)
    raise ValueError(f"role must be 'psi' or 'phi', got {role!r}")
