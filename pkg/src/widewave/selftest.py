"""Invariant checks run by the ``selftest`` command.

Each check is small (a handful of nodes and levels) and independent of the
experiment size in the config; only the physical parameters are taken from
it.  Random probes draw from a seeded generator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import (
    Grid,
    TimeAxis,
    Trajectory,
    iterated_quadrature,
    laplacian_apply,
    weighted_quadrature,
)
from .functional import WideParams, eval_wide, first_free, grad_wide, hess_vec
from .minimizer import minimize_wide, verify_stationarity
from .potentials import PotentialSpec, energy_gradient, moreau_envelope, prox_elliptic, prox_pointwise
from .reference import energy_ledger, solve_hyperbolic

__all__ = ["Check", "run_checks", "fd_gradient"]


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def fd_gradient(traj: Trajectory, params: WideParams, step: float = 1e-3) -> np.ndarray:
    """Fourth-order central differences of :func:`eval_wide` on the free levels."""
    start = first_free(params)
    out = np.zeros_like(traj.levels[start:])
    probe = traj.copy()
    for idx in np.ndindex(out.shape):
        n, i = idx[0] + start, idx[1]
        x = probe.levels[n, i]
        h = step * max(1.0, abs(x))
        vals = []
        for k in (2, 1, -1, -2):
            probe.levels[n, i] = x + k * h
            vals.append(eval_wide(probe, params))
        probe.levels[n, i] = x
        out[idx] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
    return out


def _admissible(rng, grid, time, u0, u1, rho, scale=0.5):
    levels = u0[None, :] + scale * rng.standard_normal((time.N + 1, grid.size))
    levels[0] = u0
    if rho > 0:
        levels[1] = u0 + time.tau * u1
    return Trajectory(grid, time, levels)


def _smooth(params: WideParams) -> WideParams:
    # nonsmooth densities (exponent < 2, no smoothing) have no classical gradient at 0
    def fix(spec):
        if spec.exponent < 2 and spec.kind == "power":
            return PotentialSpec("smoothed_power", spec.exponent, spec.coefficient, 0.1)
        return spec

    return params.replace(G=fix(params.G), F=fix(params.F))


def _check_laplacian(rng):
    g = Grid(1, 3)
    out = laplacian_apply(g, np.ones(3))
    stencil = np.allclose(out, [16.0, 0.0, 16.0], rtol=0, atol=1e-12)
    g2 = Grid(2, 5)
    V = rng.standard_normal((20, g2.size))
    q = np.einsum("ij,ij->i", V, laplacian_apply(g2, V))
    ok = stencil and bool(np.all(q > 0))
    return Check("laplacian", ok, f"stencil (16,0,16) {'ok' if stencil else 'wrong'}, min <Av,v> = {q.min():.3e}")


def _check_gradient(rng, params):
    grid, time = Grid(1, 5), TimeAxis(1.0, 8)
    worst = raw = 0.0
    for rho in (0.0, params.rho if params.rho > 0 else 1.0):
        p = _smooth(params).replace(rho=rho)
        u0, u1 = rng.standard_normal(grid.size), rng.standard_normal(grid.size)
        traj = _admissible(rng, grid, time, u0, u1, rho)
        g = grad_wide(traj, p)
        fd = fd_gradient(traj, p)
        # differences below the roundoff noise of the differenced values are not resolved
        noise = 100 * np.finfo(float).eps * max(1.0, abs(eval_wide(traj, p))) / 1e-3
        err = np.maximum(np.abs(g - fd) - noise, 0.0)
        denom = np.maximum(np.abs(fd), 1e-6 * np.max(np.abs(fd)))
        worst = max(worst, float(np.max(err / denom)))
        raw = max(raw, float(np.max(np.abs(g - fd) / denom)))
    return Check(
        "gradient vs finite differences",
        worst <= 1e-6,
        f"max relative error {raw:.2e} ({worst:.2e} beyond roundoff noise)",
    )


def _check_hessian(rng, params):
    grid, time = Grid(1, 5), TimeAxis(1.0, 8)
    p = _smooth(params)
    u0, u1 = rng.standard_normal(grid.size), rng.standard_normal(grid.size)
    traj = _admissible(rng, grid, time, u0, u1, p.rho)
    start = first_free(p)
    V = rng.standard_normal(traj.levels[start:].shape)
    hv = hess_vec(traj, V, p)
    h = 1e-6
    plus, minus = traj.copy(), traj.copy()
    plus.levels[start:] += h * V
    minus.levels[start:] -= h * V
    fd = (grad_wide(plus, p) - grad_wide(minus, p)) / (2 * h)
    err = float(np.max(np.abs(hv - fd)) / np.max(np.abs(fd)))
    curv = float(np.sum(V * hv))
    return Check("Hessian-vector product", err <= 1e-5 and curv > 0, f"relative error {err:.2e}, curvature {curv:.3e}")


def _check_prox(rng, params):
    v = 3 * rng.standard_normal(200)
    worst = 0.0
    for spec in (params.G, params.F, PotentialSpec("smoothed_power", 3.0, 1.0, 1e-3)):
        for lam in (1e-3, 0.1, 10.0):
            w = prox_pointwise(spec, v, lam)
            res = np.abs(w + lam * spec.derivative(w) - v)
            worst = max(worst, float(res.max() / max(1.0, np.abs(v).max())))
    grid = Grid(1, 16)
    u = rng.standard_normal(grid.size)
    w = prox_elliptic(params.F, grid, u, 0.05)
    r = w + 0.05 * energy_gradient(grid, params.F, w) - u
    l2 = lambda x: float(np.sqrt(grid.cell * np.sum(x * x)))  # noqa: E731
    ell = l2(r) / (1 + l2(u))
    ok = worst <= 1e-12 and ell <= 1e-10
    return Check("resolvents", ok, f"pointwise residual {worst:.1e}, elliptic residual {ell:.1e}")


def _check_envelope(rng, params):
    v = 2 * rng.standard_normal(100)
    G = params.G
    vals = [moreau_envelope(G, v, lam) for lam in 0.5 ** np.arange(8)]
    dominated = all(np.all(e <= G.value(v) + 1e-14) for e in vals)
    monotone = all(np.all(b >= a - 1e-14) for a, b in zip(vals, vals[1:]))
    gap = float(np.max(G.value(v) - vals[-1]))
    return Check("envelope domination", dominated and monotone, f"psi_lam <= psi, nondecreasing as lam halves, final gap {gap:.2e}")


def _check_quadrature():
    diffs = []
    for N in (16, 32, 64):
        t = TimeAxis(1.0, N)
        f = t.nodes**2
        diffs.append(abs(iterated_quadrature(f, t) - weighted_quadrature(f, t, "T-t")))
    orders = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    return Check("quadrature identity", bool(np.all(orders >= 1.9)), f"orders {', '.join(f'{o:.3f}' for o in orders)}")


def _check_convexity(rng, params):
    grid, time = Grid(1, 5), TimeAxis(1.0, 8)
    p = params
    u0, u1 = rng.standard_normal(grid.size), rng.standard_normal(grid.size)
    worst = -np.inf
    for _ in range(20):
        a = _admissible(rng, grid, time, u0, u1, p.rho)
        b = _admissible(rng, grid, time, u0, u1, p.rho)
        mid = a.with_levels(0.5 * (a.levels + b.levels))
        lhs = eval_wide(mid, p)
        rhs = 0.5 * (eval_wide(a, p) + eval_wide(b, p))
        worst = max(worst, (lhs - rhs) / max(1.0, abs(rhs)))
    return Check("midpoint convexity", worst <= 1e-13, f"max (I(mid) - mean)/scale = {worst:.2e}")


def _check_minimizer(rng, params):
    grid, time = Grid(1, 8), TimeAxis(1.0, 16)
    x = grid.coordinates()[0]
    u0, u1 = np.sin(np.pi * x), 0.5 * np.sin(2 * np.pi * x)
    p = _smooth(params).replace(reg=params.reg)
    res = minimize_wide(p, grid, time, u0, u1, grad_tol=1e-10)
    rep = verify_stationarity(res.traj, p, tol=1e-8)
    worst = max(rep.max_interior, rep.terminal_acc, rep.terminal_jet)
    ok = res.stats.converged and rep.passed
    return Check("minimizer stationarity", ok, f"{res.stats.iterations} Newton steps, residual {worst:.1e}")


def _check_ledger(params):
    grid, time = Grid(1, 16), TimeAxis(1.0, 32)
    x = grid.coordinates()[0]
    p = params.replace(rho=params.rho if params.rho > 0 else 1.0)
    traj = solve_hyperbolic(p, grid, time, np.sin(np.pi * x), np.zeros(grid.size))
    led = energy_ledger(traj, p)
    inc = float(led.increments[1:].max())
    return Check("energy ledger", led.nonincreasing(1e-9), f"max increment of E + D {inc:.2e}")


def run_checks(params: WideParams | None = None, seed: int = 0) -> list:
    """All invariant checks, in a fixed order."""
    params = params if params is not None else WideParams()
    rng = np.random.default_rng(seed)
    return [
        _check_laplacian(rng),
        _check_gradient(rng, params),
        _check_hessian(rng, params),
        _check_prox(rng, params),
        _check_envelope(rng, params),
        _check_quadrature(),
        _check_convexity(rng, params),
        _check_minimizer(rng, params),
        _check_ledger(params),
    ]
