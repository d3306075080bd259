"""Preconditioned conjugate gradients on arrays of arbitrary shape."""
from __future__ import annotations

import numpy as np


class SolverError(RuntimeError):
    """A nonlinear or linear solve did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def pcg(apply_A, b, precond=None, rtol=1e-12, atol=0.0, maxiter=1000, x0=None, norm=None):
    """Solve ``A x = b`` for SPD ``A`` given as a callable.

    Convergence is declared when ``norm(r) <= max(rtol * norm(b), atol)``;
    ``norm`` defaults to the Euclidean norm.  Returns ``(x, iterations,
    residual_norm)``.  Raises :class:`SolverError` on nonpositive curvature
    or when ``maxiter`` is exhausted.
    """
    if norm is None:
        norm = lambda v: float(np.sqrt(np.vdot(v, v).real))  # noqa: E731
    M = precond if precond is not None else (lambda r: r)
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_A(x) if x0 is not None else b.copy()
    target = max(rtol * norm(b), atol)
    res = norm(r)
    if res <= target:
        return x, 0, res
    z = M(r)
    p = z.copy()
    rz = float(np.vdot(r, z))
    for it in range(1, maxiter + 1):
        Ap = apply_A(p)
        curv = float(np.vdot(p, Ap))
        if not curv > 0:
            raise SolverError(f"nonpositive curvature {curv:.3e} in CG", res, it)
        alpha = rz / curv
        x += alpha * p
        r -= alpha * Ap
        res = norm(r)
        if res <= target:
            return x, it, res
        z = M(r)
        rz_new = float(np.vdot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {maxiter} iterations (residual {res:.3e})", res, maxiter)
