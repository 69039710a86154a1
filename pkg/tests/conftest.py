import numpy as np
import pytest

_ACCEPTANCE_LOG = []


def record_acceptance(number, name, ok, detail):
    line = f"ACCEPTANCE {number:>2} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    _ACCEPTANCE_LOG.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LOG:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LOG):
            terminalreporter.write_line(line)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
