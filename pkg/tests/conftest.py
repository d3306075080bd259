import numpy as np
import pytest

from widewave import Grid, TimeAxis, Trajectory
from widewave.functional import first_free


def admissible(rng, grid, time, u0, u1, params, scale=0.5):
    """Random trajectory satisfying the active initial constraints."""
    levels = u0[None, :] + scale * rng.standard_normal((time.N + 1, grid.size))
    levels[0] = u0
    if params.rho > 0:
        levels[1] = u0 + time.tau * u1
    return Trajectory(grid, time, levels)


def free_shape(traj, params):
    return traj.levels[first_free(params):].shape


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small():
    return Grid(1, 8), TimeAxis(1.0, 16)


CRITERIA = {}


@pytest.fixture
def criterion():
    """Record the outcome line of an acceptance criterion for the terminal summary."""

    def record(key, passed, detail, merge=False):
        # merge=True folds several parametrized cases into one line; any failure wins
        if merge and key in CRITERIA:
            ok, text = CRITERIA[key]
            passed, detail = passed and ok, f"{text}; {detail}"
        CRITERIA[key] = (passed, detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for key in sorted(CRITERIA):
            passed, detail = CRITERIA[key]
            terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {key}: {detail}")
