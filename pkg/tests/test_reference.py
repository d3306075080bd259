import numpy as np
import pytest
from scipy.integrate import solve_ivp

from widewave import (
    Grid,
    PotentialSpec,
    TimeAxis,
    Trajectory,
    WideParams,
    energy_ledger,
    error_norms,
    minimize_wide,
    modal_reference,
    modal_wide_reference,
    solve_hyperbolic,
    solve_parabolic,
    well_prepared_velocity,
)
from widewave.reference import _wide_modal_amplitude, implicit_step


def _sine(grid, k=1):
    return np.sin(k * np.pi * grid.coordinates()[0])


def test_zero_data_zero_trajectory():
    grid, time = Grid(1, 8), TimeAxis(1.0, 16)
    p = WideParams(G=PotentialSpec("power", 3.0), F=PotentialSpec("power", 3.0))
    z = np.zeros(8)
    assert np.all(solve_hyperbolic(p, grid, time, z, z).levels == 0)
    assert np.all(solve_parabolic(p, grid, time, z).levels == 0)
    led = energy_ledger(Trajectory.zeros(grid, time), p)
    assert led.max_residual == 0 and np.all(led.energy == 0) and np.all(led.dissipation == 0)


def test_modal_undamped_and_first_order():
    grid, time = Grid(1, 8), TimeAxis(1.0, 50)
    ref = modal_reference(1.0, 0.0, 0.0, grid, time)
    np.testing.assert_allclose(ref.levels, np.cos(np.pi * time.nodes)[:, None] * _sine(grid)[None, :], atol=1e-14)
    ref0 = modal_reference(0.0, 2.0, 1.0, grid, time, amplitude=3.0)
    a = 3.0 * np.exp(-(np.pi**2 + 1) * time.nodes / 2.0)
    np.testing.assert_allclose(ref0.levels, a[:, None] * _sine(grid)[None, :], atol=1e-14)


@pytest.mark.parametrize("rho,nu,c,k,v", [(1.0, 2 * np.pi, 0.0, 1, 0.0), (1.0, 0.3, 1.0, 2, 1.5),
                                         (0.2, 10.0, 0.5, 1, -2.0), (1.0, 1.0, 1.0, 1, 0.0)])
def test_modal_matches_rk_oracle(rho, nu, c, k, v):
    grid, time = Grid(1, 5), TimeAxis(1.0, 40)
    K = (k * np.pi) ** 2 + c
    sol = solve_ivp(lambda t, y: [y[1], -(nu * y[1] + K * y[0]) / rho], (0, 1), [1.0, v],
                    t_eval=time.nodes, rtol=1e-12, atol=1e-13, method="DOP853")
    ref = modal_reference(rho, nu, c, grid, time, k, 1.0, v)
    np.testing.assert_allclose(ref.levels[:, 0] / _sine(grid, k)[0], sol.y[0], atol=1e-9)


def test_nu_zero_oscillator_first_order():
    # nu and c must be positive, so the undamped oscillator is approached with 1e-12
    errs = []
    for n, N in ((16, 64), (32, 128), (64, 256)):
        grid, time = Grid(1, n), TimeAxis(1.0, N)
        p = WideParams(rho=1.0, nu=1e-12, F=PotentialSpec("power", 2.0, 1e-12))
        traj = solve_hyperbolic(p, grid, time, _sine(grid), np.zeros(n))
        ref = modal_reference(1.0, 0.0, 0.0, grid, time)
        errs.append(error_norms(traj, ref, norms=("L2L2",))["L2L2"])
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.8)


@pytest.mark.parametrize("rho", [0.0, 1.0])
def test_linear_schemes_reproduce_modal(rho):
    errs = []
    for n, N in ((16, 64), (32, 128), (64, 256)):
        grid, time = Grid(1, n), TimeAxis(1.0, N)
        p = WideParams(rho=rho, F=PotentialSpec("power", 2.0, 1.0))
        traj = solve_hyperbolic(p, grid, time, _sine(grid), np.zeros(n))
        ref = modal_reference(rho, 1.0, 1.0, grid, time)
        errs.append(error_norms(traj, ref, norms=("L2L2",))["L2L2"])
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.8)


def test_parabolic_scalar_recurrence():
    grid, time = Grid(1, 10), TimeAxis(1.0, 20)
    nu, c = 2.0, 0.5
    p = WideParams(rho=0.0, nu=nu, F=PotentialSpec("power", 2.0, c))
    traj = solve_parabolic(p, grid, time, _sine(grid))
    lam_h = (2 - 2 * np.cos(np.pi * grid.h)) / grid.h**2
    factor = 1.0 / (1.0 + time.tau * (lam_h + c) / nu)
    expect = factor ** np.arange(21)
    np.testing.assert_allclose(traj.levels / _sine(grid)[None, :], np.tile(expect[:, None], (1, 10)), rtol=1e-9)


def test_hyperbolic_scalar_recurrence():
    grid, time = Grid(1, 6), TimeAxis(1.0, 20)
    rho, nu, c, v = 1.0, 0.7, 0.3, 0.4
    p = WideParams(rho=rho, nu=nu, F=PotentialSpec("power", 2.0, c))
    u0 = _sine(grid)
    traj = solve_hyperbolic(p, grid, time, u0, v * u0)
    K = (2 - 2 * np.cos(np.pi * grid.h)) / grid.h**2 + c
    tau = time.tau
    a = [1.0, 1.0 + tau * v]
    for _ in range(19):
        # rho (a+ - 2a + a-)/tau^2 + nu (a+ - a)/tau + K a+ = 0
        a.append((rho * (2 * a[-1] - a[-2]) / tau**2 + nu * a[-1] / tau) / (rho / tau**2 + nu / tau + K))
    np.testing.assert_allclose(traj.levels[:, 2] / u0[2], a, rtol=1e-9)


@pytest.mark.parametrize("G,F", [(PotentialSpec("power", 3.0), PotentialSpec("power", 3.0)),
                                 (PotentialSpec("power", 2.5), PotentialSpec("power", 1.0))])
def test_nonlinear_step_residual(G, F, rng):
    grid = Grid(1, 16)
    cur = rng.standard_normal(16)
    prev = cur - 0.05 * rng.standard_normal(16)
    from widewave import laplacian_apply
    tau = 0.05
    if F.exponent < 2:
        F = PotentialSpec("smoothed_power", 1.0, 1.0, 1e-3)
    W, r = implicit_step(grid, 1.0, 1.0, G, F, prev, cur, tau)
    res = (W - 2 * cur + prev) / tau**2 + G.derivative((W - cur) / tau) + laplacian_apply(grid, W) + F.derivative(W)
    assert np.sqrt(grid.cell * np.sum(res**2)) == pytest.approx(r, rel=1e-6, abs=1e-12)
    assert r <= 1e-10 * (1 + np.sqrt(grid.cell * np.sum((laplacian_apply(grid, cur) + (2 * cur - prev) / tau**2) ** 2)))


def test_ledger_linear_first_order_and_monotone():
    res = []
    for N in (64, 128, 256, 512):
        grid, time = Grid(1, 32), TimeAxis(1.0, N)
        p = WideParams(rho=1.0, nu=1.0, F=PotentialSpec("power", 2.0, 1.0))
        traj = solve_hyperbolic(p, grid, time, _sine(grid), np.zeros(32))
        led = energy_ledger(traj, p)
        assert led.nonincreasing(1e-9)
        res.append(led.max_residual)
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders >= 0.9)


def test_ledger_nonlinear_and_parabolic_monotone():
    grid, time = Grid(1, 16), TimeAxis(1.0, 64)
    u0 = 2 * _sine(grid)
    p = WideParams(rho=1.0, G=PotentialSpec("power", 3.0), F=PotentialSpec("power", 3.0))
    assert energy_ledger(solve_hyperbolic(p, grid, time, u0, np.zeros(16)), p).nonincreasing(1e-9)
    p0 = p.replace(rho=0.0)
    led = energy_ledger(solve_parabolic(p0, grid, time, u0), p0)
    assert led.nonincreasing(1e-9, start=0)
    assert np.all(np.diff(led.energy) <= 1e-12)


def test_ledger_rows():
    grid, time = Grid(1, 4), TimeAxis(1.0, 8)
    p = WideParams(rho=1.0)
    led = energy_ledger(solve_hyperbolic(p, grid, time, _sine(grid), np.zeros(4)), p)
    rows = led.rows()
    assert len(rows) == 9 and rows[0][0] == 0 and rows[0][3] == 0.0


def test_hyperbolic_to_parabolic_consistency():
    grid, time = Grid(1, 16), TimeAxis(1.0, 64)
    u0 = _sine(grid)
    p = WideParams(G=PotentialSpec("power", 3.0), F=PotentialSpec("power", 3.0))
    bar = solve_parabolic(p, grid, time, u0)
    u1 = well_prepared_velocity(p, grid, time, u0)
    np.testing.assert_allclose(u0 + time.tau * u1, bar.levels[1], atol=1e-12)
    gaps = [error_norms(solve_hyperbolic(p.replace(rho=r), grid, time, u0, u1), bar, 3.0, ("LpV",))["LpV"]
            for r in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_wide_modal_solves_its_ode():
    rho, nu, K, eps, T = 1.0, 1.0, np.pi**2 + 1, 0.2, 1.0
    t = np.linspace(0, T, 2001)
    a = _wide_modal_amplitude(rho, nu, K, eps, T, 1.0, 0.5, t)
    h = t[1] - t[0]
    d = [a]
    for _ in range(4):
        d.append(np.gradient(d[-1], h, edge_order=2))
    inner = slice(20, -20)
    res = eps**2 * rho * d[4] - 2 * eps * rho * d[3] + (rho - eps * nu) * d[2] + nu * d[1] + K * a
    assert np.max(np.abs(res[inner])) <= 1e-3 * np.max(np.abs(K * a))
    assert a[0] == pytest.approx(1.0)
    assert d[1][0] == pytest.approx(0.5, abs=1e-3)


@pytest.mark.parametrize("rho", [0.0, 1.0])
def test_discrete_minimizer_approaches_wide_modal(rho):
    errs = []
    for n, N in ((16, 32), (32, 64), (64, 128)):
        grid, time = Grid(1, n), TimeAxis(1.0, N)
        p = WideParams(rho=rho, eps=0.2, F=PotentialSpec("power", 2.0, 1.0))
        traj = minimize_wide(p, grid, time, _sine(grid), np.zeros(n)).traj
        ref = modal_wide_reference(rho, 1.0, 1.0, 0.2, grid, time)
        errs.append(error_norms(traj, ref, norms=("L2L2",))["L2L2"])
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 0.8)


def test_modal_references_are_one_dimensional():
    grid, time = Grid(2, 4), TimeAxis(1.0, 8)
    with pytest.raises(ValueError):
        modal_reference(1.0, 1.0, 1.0, grid, time)
    with pytest.raises(ValueError):
        modal_wide_reference(1.0, 1.0, 1.0, 0.1, grid, time)
