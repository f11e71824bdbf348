import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from minkowski_regulator.bellman import SystemData  # noqa: E402
from minkowski_regulator.geometry import HPolytope  # noqa: E402

DATA = Path(__file__).parent / "data"

_criteria: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marks = getattr(report, "criterion", None)
    if marks:
        _criteria.setdefault(marks, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark:
        outcome.get_result().criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria, key=lambda s: int(s.split()[0][2:])):
        status = "PASS" if all(o == "passed" for o in _criteria[name]) else "FAIL"
        terminalreporter.write_line(f"{status}  {name}")


def l1_stage(n: int, m: int) -> HPolytope:
    """``ℓ(x, u) = ||(x, u)||_1``; the normals are all sign vectors."""
    d = n + m
    signs = np.array(np.meshgrid(*[[-1.0, 1.0]] * d)).reshape(d, -1).T
    return HPolytope(signs)


@pytest.fixture
def scalar_stable():
    return SystemData([[0.5]], [[1.0]], l1_stage(1, 1))


@pytest.fixture
def scalar_unstable():
    return SystemData([[2.0]], [[1.0]], l1_stage(1, 1))


@pytest.fixture
def double_integrator():
    C = HPolytope.box([1.0, 1.0, 1.0]).normals  # ℓ = max(|x1|, |x2|, |u|)
    return SystemData([[1.0, 1.0], [0.0, 1.0]], [[0.0], [1.0]], HPolytope(C))
