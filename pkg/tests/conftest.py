import numpy as np
import pytest

from kslat.datasets import load

_CRITERIA: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name, tolerance): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    name, tol = marker.args
    if report.failed:
        _CRITERIA[name] = ("FAIL", tol)
    elif report.when == "call" and name not in _CRITERIA:
        _CRITERIA[name] = ("PASS", tol)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, tol) in _CRITERIA.items():
        terminalreporter.write_line(f"{status}  {name}  [{tol}]")


@pytest.fixture(scope="session")
def basis3():
    return load("basis3")


@pytest.fixture(scope="session")
def dim2():
    return load("dim2_pairs")


@pytest.fixture(scope="session")
def peres():
    return load("peres33")


@pytest.fixture(scope="session")
def cabello():
    return load("cabello18")


@pytest.fixture
def rng():
    return np.random.default_rng(20261019)
