import pytest

from mtdcctl.config import load_config


@pytest.fixture(scope="session")
def grid6():
    """Shipped six-terminal system and its fault scenario."""
    return load_config("testgrid6")


@pytest.fixture(scope="session")
def grid6_run(grid6):
    from mtdcctl.sim import simulate

    sd, sc = grid6
    return simulate(sd, sc)


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import RESULTS, line

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        terminalreporter.write_line(line(key))
