import numpy as np
import pytest

from mslab import fields
from mslab.data import make_input
from mslab.geometry import CircleInterface, Domain, PointInterface

COMPAT_TOL = 1e-10
MAXP_TOL = 1e-12


class SolveLog:
    def __init__(self):
        self.count = 0
        self.worst_compat = 0.0
        self.worst_maxp = 0.0

    def __call__(self, u, g, beta):
        d = fields.solve_diagnostics(u, g, beta)
        self.count += 1
        self.worst_compat = max(self.worst_compat, d["compat"])
        self.worst_maxp = max(self.worst_maxp, d["maxp"])


SESSION_LOG = SolveLog()


@pytest.fixture(autouse=True)
def solve_invariants():
    """Every solve made by any test must be compatible and obey the maximum principle."""
    log = SolveLog()
    fields.SOLVE_HOOKS[:] = [log, SESSION_LOG]
    yield log
    fields.SOLVE_HOOKS.clear()
    assert log.worst_compat <= COMPAT_TOL, f"compatibility defect {log.worst_compat:.3e}"
    assert log.worst_maxp <= MAXP_TOL, f"maximum principle violated by {log.worst_maxp:.3e}"


@pytest.fixture
def line():
    return Domain(((-1.0, 1.0),))


@pytest.fixture
def unit():
    return Domain(((0.0, 1.0),))


@pytest.fixture
def square():
    return Domain(((-1.0, 1.0), (-1.0, 1.0)))


@pytest.fixture
def point(line):
    return PointInterface(line, 0.0)


@pytest.fixture
def circle(square):
    return CircleInterface(square, (0.0, 0.0), 0.5)


@pytest.fixture
def pm_one(line, point):
    """``+1`` on side 1, ``-1`` on side 2."""
    return make_input("jump_constant", line, point, inner=1.0, outer=-1.0)


@pytest.fixture
def radial(square, circle):
    return make_input("radial_jump", square, circle, inner=1.0, outer=-1.0, amplitude=0.1)


def sup(a):
    return float(np.nanmax(np.abs(a)))
