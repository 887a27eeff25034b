import math
import sys

import numpy as np
import pytest

from nstaylor import oracle, recurrence
from nstaylor.field import GridField, GridSpec
from nstaylor.trigpoly import TrigPoly, tp_max_abs, tp_to_grid

TWO_PI = 2 * math.pi


def grid_error(f: GridField, a: TrigPoly) -> float:
    """Max difference between a grid field and a trig polynomial on its nodes."""
    return float(np.max(np.abs(f.values - tp_to_grid(a, f.spec).values)))


def tp_error(a: TrigPoly, b: TrigPoly) -> float:
    return tp_max_abs(a - b)


def run_trigpoly(u0, nu, n_max, **kw):
    b = recurrence.TrigPolyBackend()
    return recurrence.run(recurrence.ProblemSpec(nu, tuple(u0), b, n_max, **kw))


def run_grid(u0, nu, n_max, n, dealias="exact_padding"):
    b = recurrence.GridBackend(GridSpec.cube(n, dealias_rule=dealias))
    u = tuple(b.from_trigpoly(c) for c in u0)
    return recurrence.run(recurrence.ProblemSpec(nu, u, b, n_max))


def build_tg_trigpoly():
    flow = oracle.taylor_green(0.1)
    return flow, run_trigpoly(oracle.initial_velocity(flow), 0.1, 12)


def build_tg_grid64():
    flow = oracle.taylor_green(0.1)
    return flow, run_grid(oracle.initial_velocity(flow), 0.1, 12, 64)


def build_random_pair():
    """Trigpoly and grid runs from the same random k0=2 data, nu=0.05, N=6."""
    u0 = oracle.random_solenoidal_field(2, seed=7)
    return run_trigpoly(u0, 0.05, 6), run_grid(u0, 0.05, 6, 32)


def build_euler_random():
    """Generic Euler run (k0=1 random data) to order 16 on a grid that resolves it."""
    u0 = oracle.random_solenoidal_field(1, seed=3)
    return run_grid(u0, 0.0, 16, 36)


tg_trigpoly = pytest.fixture(build_tg_trigpoly, scope="session", name="tg_trigpoly")
tg_grid64 = pytest.fixture(build_tg_grid64, scope="session", name="tg_grid64")
random_pair = pytest.fixture(build_random_pair, scope="session", name="random_pair")
euler_random = pytest.fixture(build_euler_random, scope="session", name="euler_random")


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.RESULTS:
        terminalreporter.write_line(line)
