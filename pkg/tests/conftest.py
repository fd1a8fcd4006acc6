import pytest

from anatomik.pose import default_skeleton
from tests.helpers import ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
