import numpy as np
import pytest

from umhi.graph import TemporalGraph


def random_digraph(rng: np.random.Generator, n: int, p: float) -> TemporalGraph:
    A = rng.random((n, n)) < p
    np.fill_diagonal(A, False)
    return TemporalGraph(n, np.argwhere(A))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


# criterion number -> status line, filled by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool | None, detail: str) -> None:
    """``passed=None`` marks a criterion that was deliberately not run."""
    status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
    ACCEPTANCE[number] = f"criterion {number}: {status} ({detail})"
    print(ACCEPTANCE[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
