"""YAML run descriptions: parsing, defaults and range checks.

A config has the sections ``grid``, ``time``, ``params``, ``potentials``,
``data``, ``solver`` and ``sweep``; every key is optional.  Violated ranges
raise :class:`ConfigError` naming the offending key and the assumption.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .discretization import Grid, TimeAxis
from .functional import WideParams
from .limits import ModalData, SweepSpec
from .potentials import KINDS, PotentialSpec, RegLevels
from .reference import well_prepared_velocity

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "parse_config", "load_config", "profile_field"]

DEFAULTS = {
    "grid": {"dim": 1, "n_per_axis": 32, "length": 1.0},
    "time": {"T": 1.0, "N": 128},
    "params": {"rho": 1.0, "eps": 0.1, "nu": 1.0, "lam": 0.0, "mu": 0.0},
    "potentials": {
        "G": {"kind": "power", "p": 2.0, "c": 1.0, "delta": 1e-6},
        "F": {"kind": "power", "r": 2.0, "c": 1.0, "delta": 1e-6},
    },
    "data": {
        "u0": {"profile": "sine", "k": 1, "amplitude": 1.0},
        "u1": {"profile": "constant", "c": 0.0},
    },
    "solver": {
        "grad_tol": None,
        "rtol": 1e-9,
        "max_newton": 50,
        "precond": "auto",
        "stationarity_tol": 1e-6,
    },
    "sweep": {
        "mode": "causal",
        "eps_list": [0.2, 0.1, 0.05, 0.025],
        "rho_list": [1e-1, 1e-2, 1e-3, 1e-4],
        "norms": ["L2L2", "LpV", "L2X"],
        "reference": "auto",
        "s": 4.0,
    },
}

PROFILES = ("sine", "bump", "constant", "well_prepared")


class ConfigError(ValueError):
    """Invalid run description; ``key`` is the dotted path of the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        path = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(path, f"unknown key (expected one of {sorted(base)})")
        if isinstance(base[key], dict) and key not in ("u0", "u1"):
            if not isinstance(value, dict):
                raise ConfigError(path, "expected a section")
            out[key] = _merge(base[key], value, path + ".")
        elif key in ("u0", "u1"):
            if not isinstance(value, dict):
                raise ConfigError(path, "expected a profile section")
            out[key] = dict(value)
        else:
            out[key] = value
    return out


def _number(value, key: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if kind is int:
        if value != int(value):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _num(cfg: dict, section: str, key: str, kind=float):
    return _number(cfg[section][key], f"{section}.{key}", kind)


def _check_profile(key: str, spec: dict) -> dict:
    profile = spec.get("profile")
    if profile not in PROFILES:
        raise ConfigError(f"data.{key}.profile", f"unknown profile {profile!r}; expected one of {PROFILES}")
    allowed = {"sine": {"k", "amplitude"}, "bump": {"amplitude"}, "constant": {"c"}, "well_prepared": set()}[profile]
    extra = set(spec) - allowed - {"profile"}
    if extra:
        raise ConfigError(f"data.{key}", f"unknown keys {sorted(extra)} for profile {profile!r}")
    if profile == "well_prepared" and key == "u0":
        raise ConfigError("data.u0.profile", "well_prepared only applies to u1")
    out = {"profile": profile}
    if profile == "sine":
        k = spec.get("k", 1)
        if isinstance(k, bool) or not isinstance(k, int) or k < 1:
            raise ConfigError(f"data.{key}.k", f"mode number must be a positive integer, got {k!r}")
        out.update(k=k, amplitude=float(spec.get("amplitude", 1.0)))
    elif profile == "bump":
        out.update(amplitude=float(spec.get("amplitude", 1.0)))
    elif profile == "constant":
        out.update(c=float(spec.get("c", 0.0)))
    return out


def profile_field(grid: Grid, spec: dict) -> np.ndarray:
    """Evaluate a named profile on the grid nodes.

    ``sine``: ``amplitude * prod_i sin(k pi x_i / L)``; ``bump``:
    ``amplitude * prod_i exp(1 - 1/(1 - s_i^2))`` with ``s_i = 2 x_i/L - 1``;
    ``constant``: ``c`` everywhere.
    """
    coords = grid.coordinates()
    L = grid.length
    profile = spec["profile"]
    if profile == "sine":
        out = spec["amplitude"] * np.ones(grid.size)
        for x in coords:
            out = out * np.sin(spec["k"] * np.pi * x / L)
        return out
    if profile == "bump":
        out = spec["amplitude"] * np.ones(grid.size)
        for x in coords:
            s2 = (2 * x / L - 1) ** 2
            out = out * np.where(s2 < 1, np.exp(1 - 1 / (1 - np.minimum(s2, 1 - 1e-16))), 0.0)
        return out
    if profile == "constant":
        return np.full(grid.size, spec["c"])
    raise ValueError(f"profile {profile!r} has no closed form")


@dataclass
class RunConfig:
    grid: Grid
    time: TimeAxis
    params: WideParams
    u0_spec: dict
    u1_spec: dict
    solver: dict
    sweep: dict
    raw: dict

    def initial_data(self):
        """``(u0, u1)`` on the grid; ``well_prepared`` resolves through the parabolic step."""
        u0 = profile_field(self.grid, self.u0_spec)
        if self.u1_spec["profile"] == "well_prepared":
            u1 = well_prepared_velocity(self.params, self.grid, self.time, u0)
        else:
            u1 = profile_field(self.grid, self.u1_spec)
        return u0, u1

    def modal_data(self) -> ModalData | None:
        """Single-mode description when the data allow the exact linear references."""
        a, b = self.u0_spec, self.u1_spec
        if self.grid.dim != 1 or a["profile"] != "sine":
            return None
        if b["profile"] == "constant" and b["c"] == 0:
            return ModalData(a["k"], a["amplitude"], 0.0)
        if b["profile"] == "sine" and b["k"] == a["k"]:
            return ModalData(a["k"], a["amplitude"], b["amplitude"])
        return None

    def sweep_spec(self, threads: int = 1) -> SweepSpec:
        s = self.sweep
        eps_list = s["eps_list"] if s["mode"] in ("causal", "diagonal") else ()
        rho_list = s["rho_list"] if s["mode"] != "causal" else ()
        return SweepSpec(
            mode=s["mode"],
            params=self.params,
            eps_list=tuple(eps_list),
            rho_list=tuple(rho_list),
            norms=tuple(s["norms"]),
            reference=s["reference"],
            s=s["s"],
            grad_tol=self.solver["grad_tol"],
            threads=threads,
        )


def _potential(cfg: dict, name: str, exp_key: str):
    sec = cfg["potentials"][name]
    key = f"potentials.{name}"
    extra = set(sec) - {"kind", "c", "delta", exp_key}
    if extra:
        raise ConfigError(key, f"unknown keys {sorted(extra)}")
    if sec.get("kind") not in KINDS:
        raise ConfigError(f"{key}.kind", f"unknown kind {sec.get('kind')!r}; expected one of {KINDS}")
    c = _number(sec.get("c", 1.0), f"{key}.c")
    if not c > 0:
        raise ConfigError(f"{key}.c", f"coefficient must be positive, got {c}")
    delta = _number(sec.get("delta", 1e-6), f"{key}.delta")
    if delta < 0:
        raise ConfigError(f"{key}.delta", f"smoothing must be nonnegative, got {delta}")
    exponent = _number(sec.get(exp_key, 2.0), f"{key}.{exp_key}")
    return sec["kind"], exponent, c, delta


def parse_config(text: str | dict) -> RunConfig:
    """Validate a YAML document (or an already parsed mapping)."""
    if isinstance(text, dict):
        doc = text
    else:
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("<document>", f"malformed YAML: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("<document>", "top level must be a mapping of sections")
    cfg = _merge(DEFAULTS, doc)

    dim = _num(cfg, "grid", "dim", int)
    if dim not in (1, 2):
        raise ConfigError("grid.dim", f"dimension must be 1 or 2, got {dim}")
    n = _num(cfg, "grid", "n_per_axis", int)
    if n < 2:
        raise ConfigError("grid.n_per_axis", f"need at least 2 interior nodes, got {n}")
    length = _num(cfg, "grid", "length")
    if not length > 0:
        raise ConfigError("grid.length", f"length must be positive, got {length}")
    T = _num(cfg, "time", "T")
    if not T > 0:
        raise ConfigError("time.T", f"final time must be positive, got {T}")
    N = _num(cfg, "time", "N", int)
    if N < 2:
        raise ConfigError("time.N", f"need at least 2 time steps, got {N}")

    rho = _num(cfg, "params", "rho")
    if not rho >= 0:
        raise ConfigError("params.rho", f"violates rho ≥ 0 (got {rho})")
    eps = _num(cfg, "params", "eps")
    if not eps > 0:
        raise ConfigError("params.eps", f"violates ε > 0 (got {eps})")
    nu = _num(cfg, "params", "nu")
    if not nu > 0:
        raise ConfigError("params.nu", f"violates ν > 0 (got {nu})")
    lam = _num(cfg, "params", "lam")
    mu = _num(cfg, "params", "mu")
    for key, value in (("lam", lam), ("mu", mu)):
        if not value >= 0:
            raise ConfigError(f"params.{key}", f"regularization level must be nonnegative, got {value}")

    Gkind, p, Gc, Gd = _potential(cfg, "G", "p")
    Fkind, r, Fc, Fd = _potential(cfg, "F", "r")
    if not 2 <= p < 4:
        raise ConfigError("potentials.G.p", f"p = {p} violates the assumption 2 ≤ p < 4")
    if not 1 <= r <= p:
        raise ConfigError("potentials.F.r", f"r = {r} violates the assumption r ∈ [1,p] (p = {p})")

    u0_spec = _check_profile("u0", cfg["data"]["u0"])
    u1_spec = _check_profile("u1", cfg["data"]["u1"])

    solver = cfg["solver"]
    if solver["grad_tol"] is not None:
        gt = _num(cfg, "solver", "grad_tol")
        if not gt > 0:
            raise ConfigError("solver.grad_tol", f"must be positive, got {gt}")
        solver["grad_tol"] = gt
    for key in ("rtol", "stationarity_tol"):
        v = _num(cfg, "solver", key)
        if not v > 0:
            raise ConfigError(f"solver.{key}", f"must be positive, got {v}")
        solver[key] = v
    if _num(cfg, "solver", "max_newton", int) < 1:
        raise ConfigError("solver.max_newton", "must be at least 1")
    if solver["precond"] not in ("auto", "factorized", "jacobi"):
        raise ConfigError("solver.precond", f"unknown preconditioner {solver['precond']!r}")

    params = WideParams(
        rho=rho,
        eps=eps,
        nu=nu,
        G=PotentialSpec(Gkind, p, Gc, Gd),
        F=PotentialSpec(Fkind, r, Fc, Fd),
        reg=RegLevels(lam, mu),
    )
    run = RunConfig(Grid(dim, n, length), TimeAxis(T, N), params, u0_spec, u1_spec, solver, cfg["sweep"], cfg)
    try:
        run.sweep_spec()
    except (TypeError, ValueError) as exc:
        raise ConfigError("sweep", str(exc)) from exc
    return run


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from exc
    return parse_config(text)
