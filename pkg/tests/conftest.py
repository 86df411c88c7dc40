import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance

    if test_acceptance.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.REPORT):
            terminalreporter.write_line(line)
