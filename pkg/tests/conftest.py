import numpy as np
import pytest

# (criterion number, passed, detail) recorded by test_acceptance
ACCEPTANCE: list[tuple[int, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, status, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num}: {status} - {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
