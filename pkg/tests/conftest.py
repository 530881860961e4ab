from __future__ import annotations

import pytest

from mfscl.core import (
    ExperimentConfig,
    burgers_flux,
    compressive_initial,
    expansive_initial,
    make_grid,
)

# one pass/fail line per acceptance criterion, printed at the end of the run
_ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def acceptance_log():
    def record(criterion: str, passed: bool, detail: str) -> None:
        _ACCEPTANCE_RESULTS.append((criterion, passed, detail))
        assert passed, f"{criterion}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in _ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {criterion}: {detail}")


@pytest.fixture(scope="session")
def flux():
    return burgers_flux()


@pytest.fixture(scope="session")
def desk_grid():
    return make_grid(6.0, 301)


@pytest.fixture(scope="session")
def compressive():
    return compressive_initial()


@pytest.fixture(scope="session")
def expansive():
    return expansive_initial()


@pytest.fixture(scope="session")
def desk_config():
    return ExperimentConfig.desk_scale()
