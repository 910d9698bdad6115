import pytest

from liqss.analysis import Scenario


@pytest.fixture(scope="session")
def scenario():
    return Scenario()


@pytest.fixture(scope="session")
def reference(scenario):
    return scenario.reference()


@pytest.fixture(scope="session")
def liqss_1e4(scenario):
    """Default scenario at flux quantum 1e-4, with events and samples kept."""
    return scenario.liqss(1e-4, record=True)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Pass/fail lines of the acceptance criteria, echoed in the summary."""
    return request.config.stash.setdefault(ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
