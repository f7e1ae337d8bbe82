import logging

import numpy as np
import pytest

from triquad import ProblemSpec, TerminalPart, table_providers


@pytest.fixture(autouse=True)
def _quiet_logs():
    logging.getLogger("triquad").setLevel(logging.ERROR)
    yield


def mild_table_providers():
    """delta = 1/(1+g), Delta = 1+g on a log grid: valid providers whose step sizes stay representable."""
    g = np.concatenate([[0.0], np.logspace(-3, 12, 400)])
    return table_providers((g, 1.0 / (1.0 + g)), (g, 1.0 + g), name="mild-table")


@pytest.fixture
def mild_providers():
    return mild_table_providers()


def constant_h_spec(T, a=-0.01, C=0.01):
    return ProblemSpec(1, 1, T, C, 0.0, [TerminalPart("constant", {"value": 0.0})],
                       h_parts=[{"family": "constant", "value": a}])


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Print and keep one verdict line per acceptance criterion."""
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
