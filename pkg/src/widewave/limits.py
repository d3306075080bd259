"""Limit experiments: eps and rho sweeps, the recovery sequence and a-priori bounds.

A sweep runs one solver per parameter point, measures discrete error norms
against a reference trajectory and attaches the five a-priori diagnostics.
Points are independent and run on a thread pool; rows come back in the
order of the parameter list.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._linalg import SolverError
from .discretization import Grid, TimeAxis, Trajectory, norm
from .functional import WideParams, eval_wide
from .minimizer import minimize_wide
from .potentials import energy
from .reference import modal_reference, modal_wide_reference, solve_hyperbolic, solve_parabolic

__all__ = [
    "NORMS",
    "SweepSpec",
    "SweepData",
    "ModalData",
    "SweepRow",
    "ConvergenceTable",
    "AprioriReport",
    "GammaResult",
    "error_norms",
    "sweep",
    "gamma_recovery",
    "gamma_table",
    "apriori_report",
    "bump_kernel",
]

log = logging.getLogger(__name__)

NORMS = ("L2L2", "LpV", "L2X")
MODES = ("causal", "viscous", "diagonal", "gamma")
REFERENCES = ("auto", "hyperbolic", "modal", "modal_wide", "parabolic")
SUBSEQUENCE_CAVEAT = (
    "convergence is proved along a subsequence only; the full parameter sequence is measured"
)
NONLINEAR_CAVEAT = "nonlinear f: the causal reference may be one solution among several; errors are reported, not asserted"


def _strictly_decreasing(values) -> bool:
    v = np.asarray(values, dtype=float)
    return bool(v.size > 0 and np.all(v[1:] < v[:-1]))


@dataclass(frozen=True)
class SweepSpec:
    """One limit experiment.

    ``causal`` sweeps ``eps_list`` at the template's ``rho``; ``viscous``
    sweeps ``rho_list`` with the hyperbolic stepper; ``diagonal`` pairs
    ``eps_list[k]`` with ``rho_list[k]``; ``gamma`` sweeps ``rho_list`` through
    :func:`gamma_recovery`.
    """

    mode: str
    params: WideParams
    eps_list: tuple = ()
    rho_list: tuple = ()
    norms: tuple = NORMS
    reference: str = "auto"
    s: float = 4.0
    grad_tol: float | None = None
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sweep mode {self.mode!r}; expected one of {MODES}")
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown reference {self.reference!r}; expected one of {REFERENCES}")
        object.__setattr__(self, "eps_list", tuple(float(e) for e in self.eps_list))
        object.__setattr__(self, "rho_list", tuple(float(r) for r in self.rho_list))
        object.__setattr__(self, "norms", tuple(self.norms))
        bad = [n for n in self.norms if n not in NORMS]
        if bad or not self.norms:
            raise ValueError(f"norms must be a nonempty subset of {NORMS}, got {self.norms}")
        needs = {"causal": ("eps_list",), "viscous": ("rho_list",), "gamma": ("rho_list",),
                 "diagonal": ("eps_list", "rho_list")}[self.mode]
        for name in needs:
            values = getattr(self, name)
            if not values:
                raise ValueError(f"{self.mode} sweep needs a nonempty {name}")
            if any(not v > 0 for v in values):
                raise ValueError(f"{name} must be positive, got {values}")
            if any(b >= a for a, b in zip(values, values[1:])):
                raise ValueError(f"{name} must be strictly decreasing, got {values}")
        if self.mode == "diagonal" and len(self.eps_list) != len(self.rho_list):
            raise ValueError("diagonal sweep pairs eps_list and rho_list; lengths differ")
        if self.mode == "gamma" and not self.s > 3:
            raise ValueError(f"recovery exponent s must exceed 3, got {self.s}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")

    @property
    def parameter_name(self) -> str:
        return "eps" if self.mode in ("causal", "diagonal") else "rho"

    @property
    def parameters(self) -> tuple:
        return self.eps_list if self.mode in ("causal", "diagonal") else self.rho_list


@dataclass(frozen=True)
class ModalData:
    """Single-mode data ``u0 = amplitude sin(k pi x/L)``, ``u1 = velocity sin(k pi x/L)``."""

    k: int = 1
    amplitude: float = 1.0
    velocity: float = 0.0


@dataclass
class SweepData:
    """Initial data of a sweep; ``modal`` enables the exact linear references."""

    u0: np.ndarray
    u1: np.ndarray | None = None
    modal: ModalData | None = None
    path: Trajectory | None = None  # trajectory to recover in gamma mode

    @classmethod
    def from_modal(cls, grid: Grid, modal: ModalData) -> "SweepData":
        mode = np.sin(modal.k * np.pi * grid.coordinates()[0] / grid.length)
        return cls(modal.amplitude * mode, modal.velocity * mode, modal)


@dataclass
class SweepRow:
    parameter: float
    errors: dict
    orders: dict
    apriori: tuple
    status: str = "ok"


@dataclass
class ConvergenceTable:
    mode: str
    parameter_name: str
    norms: tuple
    rows: list = field(default_factory=list)
    baseline: dict | None = None
    caveats: list = field(default_factory=list)

    def errors(self, name: str = "L2L2") -> np.ndarray:
        return np.array([r.errors.get(name, math.nan) for r in self.rows])

    def parameters(self) -> np.ndarray:
        return np.array([r.parameter for r in self.rows])

    def strictly_decreasing(self, name: str = "L2L2") -> bool:
        return _strictly_decreasing(self.errors(name))

    def apriori(self) -> np.ndarray:
        return np.array([r.apriori for r in self.rows], dtype=float).reshape(len(self.rows), 5)

    def monitor(self, factor: float = 3.0, floor: float = 1e-12) -> list:
        """Rows whose a-priori diagnostics exceed ``factor`` times the first row's.

        Returns ``(row index, diagnostic index)`` pairs, 1-based diagnostics;
        an empty list means the bounds are uniform across the sweep.
        """
        A = self.apriori()
        if A.size == 0:
            return []
        bound = factor * np.maximum(A[0], floor)
        flags = []
        for i, row in enumerate(A):
            for j in np.flatnonzero(~(row <= bound)):
                flags.append((i, int(j) + 1))
        return flags

    def header(self) -> list:
        return (
            ["parameter"]
            + [f"err_{n}" for n in self.norms]
            + [f"order_{n}" for n in self.norms]
            + [f"apriori_{i}" for i in range(1, 6)]
            + ["status"]
        )

    def records(self) -> list:
        out = []
        for r in self.rows:
            out.append(
                [r.parameter]
                + [r.errors.get(n, math.nan) for n in self.norms]
                + [r.orders.get(n, math.nan) for n in self.norms]
                + list(r.apriori)
                + [r.status]
            )
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for rec in self.records():
                w.writerow([repr(float(v)) if not isinstance(v, str) else v for v in rec])

    def as_dict(self) -> dict:
        def clean(v):
            return None if isinstance(v, float) and not math.isfinite(v) else v

        rows = [dict(zip(self.header(), [clean(v) for v in rec])) for rec in self.records()]
        return {
            "mode": self.mode,
            "parameter": self.parameter_name,
            "norms": list(self.norms),
            "rows": rows,
            "baseline": self.baseline,
            "caveats": list(self.caveats),
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)
            fh.write("\n")


@dataclass(frozen=True)
class AprioriReport:
    """The five bounded quantities, in order: inertia, dissipation, energy,
    terminal velocity defect, sup of the V-norm."""

    inertia: float
    dissipation: float
    energy: float
    terminal_velocity: float
    sup_v: float

    def as_tuple(self) -> tuple:
        return (self.inertia, self.dissipation, self.energy, self.terminal_velocity, self.sup_v)


def apriori_report(traj: Trajectory, params: WideParams, u1=None) -> AprioriReport:
    """Discrete analogues of the uniform bounds on a trajectory.

    ``eps rho sum tau |D2 U^n|^2``, ``sum tau psi_h(D1 U^n)``,
    ``sum tau w_n phi_h(U^n)`` (trapezoid), ``rho |D1 U^N - u1|^2`` and
    ``max_n |U^n|_{L^p}`` with ``p`` the dissipation exponent.
    """
    grid, time = traj.grid, traj.time
    U, tau, cell = traj.levels, time.tau, grid.cell
    D1 = np.diff(U, axis=0) / tau
    D2 = (U[2:] - 2 * U[1:-1] + U[:-2]) / tau**2
    u1 = np.zeros(grid.size) if u1 is None else np.asarray(u1, dtype=float)
    inertia = params.eps * params.rho * tau * cell * float(np.sum(D2 * D2))
    dissipation = tau * cell * float(np.sum(params.G.value(D1)))
    en = float(time.trapezoid() @ energy(grid, params.F, U))
    tv = D1[-1] - u1
    terminal = params.rho * cell * float(tv @ tv)
    p = params.G.exponent
    sup_v = max(norm(grid, row, "Lp", p) for row in U)
    return AprioriReport(inertia, dissipation, en, terminal, float(sup_v))


def error_norms(traj: Trajectory, ref: Trajectory, p: float = 2.0, norms: Sequence[str] = NORMS) -> dict:
    """Discrete L2(0,T;L2), L^p(0,T;L^p) of the difference quotient, L2(0,T;H^1_0)."""
    grid, time = traj.grid, traj.time
    E = traj.levels - ref.levels
    w = time.trapezoid()
    out = {}
    if "L2L2" in norms:
        out["L2L2"] = float(np.sqrt(w @ (grid.cell * np.sum(E * E, axis=1))))
    if "LpV" in norms:
        dE = np.diff(E, axis=0) / time.tau
        out["LpV"] = float((time.tau * grid.cell * np.sum(np.abs(dE) ** p)) ** (1.0 / p))
    if "L2X" in norms:
        sq = np.array([norm(grid, row, "H10") ** 2 for row in E])
        out["L2X"] = float(np.sqrt(w @ sq))
    return out


def _orders(rows: list, norms) -> None:
    # order between consecutive rows: log(e_{k-1}/e_k) / log(p_{k-1}/p_k)
    for prev, row in zip(rows, rows[1:]):
        for n in norms:
            a, b = prev.errors.get(n, math.nan), row.errors.get(n, math.nan)
            if a > 0 and b > 0 and math.isfinite(a) and math.isfinite(b):
                row.orders[n] = math.log(a / b) / math.log(prev.parameter / row.parameter)
            else:
                row.orders[n] = math.nan
    if rows:
        rows[0].orders = {n: math.nan for n in norms}


def _is_linear(params: WideParams) -> bool:
    return params.G.is_quadratic and params.F.is_quadratic and params.reg.lam == 0 and params.reg.mu == 0


def _modal(data: SweepData, params: WideParams, grid: Grid, time: TimeAxis, eps: float | None = None):
    if data.modal is None or grid.dim != 1 or not _is_linear(params):
        raise ValueError("modal references need single-mode data, dim 1 and quadratic G, F without regularization")
    m = data.modal
    c = params.F.coefficient
    nu = params.nu * params.G.coefficient
    if eps is None:
        return modal_reference(params.rho, nu, c, grid, time, m.k, m.amplitude, m.velocity)
    return modal_wide_reference(params.rho, nu, c, eps, grid, time, m.k, m.amplitude, m.velocity)


def _run_point(fn: Callable[[], Trajectory], ref_fn, params, data, spec, parameter) -> SweepRow:
    u1 = data.u1 if params.rho > 0 else None
    try:
        traj = fn()
        ref = ref_fn()
        errs = error_norms(traj, ref, params.G.exponent, spec.norms)
        return SweepRow(parameter, errs, {}, apriori_report(traj, params, u1).as_tuple())
    except (SolverError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.warning("sweep point %s=%g failed: %s", spec.parameter_name, parameter, exc)
        return SweepRow(parameter, {n: math.nan for n in spec.norms}, {}, (math.nan,) * 5, f"failed: {exc}")


def sweep(spec: SweepSpec, grid: Grid, time: TimeAxis, data: SweepData) -> ConvergenceTable:
    """Run a limit experiment and tabulate errors, orders and a-priori diagnostics.

    References: causal mode uses the modal oracle when the data are single-mode
    and the problem is linear (``reference="auto"``), otherwise
    ``solve_hyperbolic`` at the template ``rho``; ``reference="modal_wide"``
    compares each point with the exact WIDE minimizer at the same ``eps``.
    Viscous and diagonal modes use ``solve_parabolic``.  A failing point is
    recorded with status ``failed`` and NaN errors.
    """
    base = spec.params
    u0 = np.asarray(data.u0, dtype=float)
    u1 = np.zeros_like(u0) if data.u1 is None else np.asarray(data.u1, dtype=float)
    data = SweepData(u0, u1, data.modal, data.path)
    table = ConvergenceTable(spec.mode, spec.parameter_name, spec.norms, caveats=[SUBSEQUENCE_CAVEAT])
    if not _is_linear(base):
        table.caveats.append(NONLINEAR_CAVEAT)

    if spec.mode == "gamma":
        return _gamma_sweep(spec, grid, time, data, table)

    def minimizer(params):
        return lambda: minimize_wide(params, grid, time, u0, u1, grad_tol=spec.grad_tol).traj

    jobs = []
    if spec.mode == "causal":
        kind = spec.reference
        if kind == "auto":
            kind = "modal" if data.modal is not None and _is_linear(base) and grid.dim == 1 else "hyperbolic"
        if kind == "parabolic":
            raise ValueError("causal sweeps compare with a causal reference, not the parabolic one")
        cache = {}

        def causal_ref():
            if "ref" not in cache:
                cache["ref"] = (
                    _modal(data, base, grid, time) if kind == "modal"
                    else solve_hyperbolic(base, grid, time, u0, u1)
                )
            return cache["ref"]

        if kind in ("modal", "hyperbolic"):
            causal_ref()  # build once before the pool starts
        if kind == "modal":
            scheme = solve_hyperbolic(base, grid, time, u0, u1)
            table.baseline = {"scheme": "solve_hyperbolic", "reference": "modal",
                              **error_norms(scheme, causal_ref(), base.G.exponent, spec.norms)}
        for eps in spec.eps_list:
            params = base.replace(eps=eps)
            if kind == "modal_wide":
                ref = (lambda e=eps: _modal(data, base, grid, time, eps=e))
            else:
                ref = causal_ref
            jobs.append((minimizer(params), ref, params, eps))
    else:
        if spec.reference not in ("auto", "parabolic"):
            raise ValueError(f"{spec.mode} sweeps compare with the parabolic reference")
        parabolic = solve_parabolic(base, grid, time, u0)
        if spec.mode == "viscous":
            for rho in spec.rho_list:
                params = base.replace(rho=rho)
                jobs.append(((lambda p=params: solve_hyperbolic(p, grid, time, u0, u1)),
                             (lambda: parabolic), params, rho))
        else:
            for eps, rho in zip(spec.eps_list, spec.rho_list):
                params = base.replace(eps=eps, rho=rho)
                jobs.append((minimizer(params), (lambda: parabolic), params, eps))

    def run(job):
        fn, ref_fn, params, parameter = job
        return _run_point(fn, ref_fn, params, data, spec, parameter)

    with ThreadPoolExecutor(max_workers=spec.threads) as pool:
        table.rows = list(pool.map(run, jobs))
    _orders(table.rows, spec.norms)
    return table


@dataclass
class GammaResult:
    recovered: Trajectory
    I_val: float
    Ibar_val: float
    gap: float
    rho_tilde: float


def bump_kernel(time: TimeAxis, width: float) -> np.ndarray:
    """Samples of ``exp(-1/(1 - (t/width)^2))`` at ``t = j tau``, ``|t| < width``.

    Returned for ``j = -J..J`` and normalized so that ``tau * sum = 1``.
    """
    tau = time.tau
    J = int(np.ceil(width / tau)) - 1
    J = max(J, 0)
    j = np.arange(-J, J + 1)
    z = (j * tau / width) ** 2
    with np.errstate(divide="ignore"):
        g = np.where(z < 1, np.exp(-1.0 / (1.0 - np.minimum(z, 1 - 1e-300))), 0.0)
    return g / (tau * g.sum())


def gamma_recovery(
    u: Trajectory,
    rho: float,
    eps: float,
    s: float = 4.0,
    u1=None,
    params: WideParams | None = None,
) -> GammaResult:
    """Recovery trajectory for ``u`` at inertia ``rho`` and the resulting gap.

    With ``rt = rho**(1/s)`` and ``M = g_rt * u`` (discrete convolution in
    time, ``u`` extended by ``u(0)`` for ``t < 0`` and by the point reflection
    ``2 u(T) - u(2T - t)`` for ``t > T``) the recovered trajectory is
    ``M + u0 - M^0 + (u1 - D1 M^1) zeta`` with ``zeta(t) = t exp(-(t - tau)/rt)``,
    whose first difference quotient at 0 is exactly 1.  ``params`` supplies
    ``nu``, ``G``, ``F`` and the regularization; ``rho`` and ``eps`` override it.
    """
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    if not s > 3:
        raise ValueError(f"s must exceed 3, got {s}")
    base = params if params is not None else WideParams()
    time = u.time
    U = u.levels
    N = time.N
    u0 = U[0]
    u1 = np.zeros_like(u0) if u1 is None else np.asarray(u1, dtype=float)
    rt = rho ** (1.0 / s)
    if rt >= time.T:
        raise ValueError(f"mollifier support {rt:.3g} exceeds the time axis T = {time.T}")
    g = bump_kernel(time, rt)
    J = (g.size - 1) // 2
    ext = np.concatenate([np.repeat(u0[None, :], J, axis=0), U, 2 * U[-1] - U[N - 1 : N - J - 1 : -1]])
    # M^n = tau sum_j g_j U^{n-j}; ext[n + J - j] = U^{n-j}
    M = np.zeros_like(U)
    for idx, gj in enumerate(g):
        j = idx - J
        M += time.tau * gj * ext[J - j : J - j + N + 1]
    t = time.nodes
    zeta = t * np.exp(-(t - time.tau) / rt)
    dM1 = (M[1] - M[0]) / time.tau
    R = M + (u0 - M[0])[None, :] + zeta[:, None] * (u1 - dM1)[None, :]
    R[0] = u0
    recovered = Trajectory(u.grid, time, R)
    I_val = eval_wide(recovered, base.replace(rho=rho, eps=eps))
    Ibar_val = eval_wide(u, base.replace(rho=0.0, eps=eps))
    return GammaResult(recovered, I_val, Ibar_val, abs(I_val - Ibar_val), rt)


def gamma_table(
    u: Trajectory,
    rho_list: Sequence[float],
    eps: float,
    s: float = 4.0,
    u1=None,
    params: WideParams | None = None,
) -> ConvergenceTable:
    """Recovery gaps along ``rho_list`` as a table with the single norm ``gap``."""
    table = ConvergenceTable("gamma", "rho", ("gap",), caveats=[SUBSEQUENCE_CAVEAT])
    base = params if params is not None else WideParams()
    for rho in rho_list:
        res = gamma_recovery(u, rho, eps, s, u1, base)
        pr = base.replace(rho=rho, eps=eps)
        table.rows.append(SweepRow(float(rho), {"gap": res.gap}, {},
                                   apriori_report(res.recovered, pr, u1).as_tuple()))
    _orders(table.rows, ("gap",))
    return table


def _gamma_sweep(spec, grid, time, data, table):
    base = spec.params
    path = data.path
    if path is None:
        path = solve_parabolic(base, grid, time, data.u0)
    eps = spec.eps_list[0] if spec.eps_list else base.eps
    out = gamma_table(path, spec.rho_list, eps, spec.s, data.u1, base)
    out.caveats = table.caveats
    return out
