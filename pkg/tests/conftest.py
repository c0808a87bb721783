import re

import pytest

_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.outcome != "passed":
        _results[key] = _results.get(key, True) and report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), ok in sorted(_results.items()):
        terminalreporter.write_line(f"criterion {num:2d} {name:<40s} {'PASS' if ok else 'FAIL'}")


@pytest.fixture(scope="session")
def stress_config_text():
    return "\n".join([
        "# large initial velocity with a small density floor",
        "dim = 1",
        "n = 128",
        "N = 16",
        "dt = 1e-3",
        "T_end = 1.0",
        "delta = 1e-3",
        "u0 = sine",
        "u0.amplitude = 50",
        "",
    ])


@pytest.fixture(scope="session")
def small_run_text():
    return "\n".join([
        "dim = 1",
        "n = 64",
        "N = 8",
        "dt = 1e-3",
        "T_end = 0.05",
        "rho0 = sine",
        "rho0.value = 1",
        "rho0.amplitude = 0.1",
        "u0 = random",
        "u0.amplitude = 0.05",
        "u0.wavenumber = 3",
        "seed = 11",
        "snapshot_cadence = 10",
        "",
    ])
