import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# Acceptance verdicts, printed together at the end of the session.
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[n])
