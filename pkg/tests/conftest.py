import math

import numpy as np
import pytest

from poisson_dynkin import closedform, solver
from poisson_dynkin.model import COMMON, INDEPENDENT

# golden values for r = lambda = 1, eps = 9, from a 50-digit mpmath evaluation
# of the same formulas (see tests/test_closedform.py::test_golden_values_match_mpmath)
GOLD = {
    "eps_bound": 2.4669845465021580,
    "x_star": 1.6485654127949284,
    "A": -0.0616669477034747,
    "B": -0.000383035123499516,
    "C": 1.63170414840765893,
    "D": 1.02925832725477807,
    "V": {0.0: 0.43833305229652514, 0.5: 0.40484292719060366, 1.0: 0.267996875067707679,
          1.2: 0.1938025969910706, 2.0: 0.06083508183750392, 3.0: 0.014790026435372123},
    "dV1": -0.447314822197010,
    "dVxs": -0.141421356237309505,
    "shoulder_level": 0.12598635779233386,
}


@pytest.fixture(scope="session")
def cf():
    return closedform.build_solution(1.0, 1.0, 9.0)


@pytest.fixture(scope="session")
def grid():
    return solver.GridConfig(-8.0, 8.0, 1e-3, tolerance=1e-10)


@pytest.fixture(scope="session")
def fig1_solutions(grid):
    g = closedform.indicator_game()
    return {m: solver.solve(g, grid, m) for m in (COMMON, INDEPENDENT)}


@pytest.fixture(scope="session")
def fig2_solutions(grid):
    g = closedform.counterexample_game()
    return {m: solver.solve(g, grid, m) for m in (COMMON, INDEPENDENT)}


def window(x, lo, hi):
    return (x >= lo) & (x <= hi)


# --------------------------------------------------------------------------
# one summary line per acceptance criterion

_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    entry = _CRITERIA.setdefault(mark.args[0], {"ok": True, "notes": []})
    entry["ok"] &= rep.passed and not hasattr(rep, "wasxfail")
    entry["notes"] += [str(v) for k, v in item.user_properties if k == "detail"]
    if hasattr(rep, "wasxfail"):
        entry["notes"].append(f"{item.name} fails as expected: {rep.wasxfail}")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if e['ok'] else 'FAIL'}  " + "; ".join(e["notes"]))
