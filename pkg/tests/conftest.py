import os

import numpy as np
import pytest
import torch

torch.set_num_threads(int(os.environ.get("DPANET_TEST_THREADS", "1")))

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record_criterion():
    def record(number: int, passed: bool | None, detail: str) -> str:
        """``passed=None`` marks a criterion that could not run here."""
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        line = f"CRITERION {number:2d}: {status}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
