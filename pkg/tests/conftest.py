import re

import numpy as np
import pytest

from chargedrop import _backend

CRITERIA = {
    1: "sphere capacity, uniform weights, EL spread",
    2: "dilation scaling (Riesz and logarithmic)",
    3: "boundary concentration of equilibrium mass",
    4: "L-infinity density bound on the shape suite",
    5: "droplet non-existence construction",
    6: "splitting regime against the connected bound",
    7: "ball stability at desk scale",
    8: "radial-graph distance expansion identity",
    9: "Fuglede constant fit",
    10: "logarithmic checks (circle, corner, two circles)",
    11: "bit-identical CLI output",
}

_outcomes = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.failed:
        _outcomes[n] = "FAIL"
    elif report.when == "call" and report.passed:
        _outcomes.setdefault(n, "PASS")
    elif report.skipped:
        _outcomes.setdefault(n, "SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        terminalreporter.write_line(f"criterion {n:2d}  {_outcomes.get(n, 'NOT RUN'):8s} {title}")


@pytest.fixture(autouse=True, scope="session")
def _single_thread():
    # timings and reductions are specified single-threaded
    _backend.set_threads(1)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
