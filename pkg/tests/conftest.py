import re

import numpy as np
import pytest

from vlasov_scheme.torus_grid import make_grid

_CRITERIA = {}


@pytest.fixture
def grid64():
    return make_grid(1, 64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_runtest_logreport(report):
    match = re.search(r"test_criterion_(\d+)_(\w+)", report.nodeid)
    if match:
        key = int(match.group(1))
        name, ok, duration = _CRITERIA.get(key, (match.group(2), True, 0.0))
        _CRITERIA[key] = (name, ok and report.outcome == "passed", duration + report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        name, ok, duration = _CRITERIA[key]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {key:2d} {status}  {name}  ({duration:.1f} s)")
