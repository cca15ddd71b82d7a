import sys
from functools import lru_cache
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dtpclab import capacity as cap  # noqa: E402
from dtpclab.channel import PoissonChannel, PowerConstraint  # noqa: E402


@lru_cache(maxsize=None)
def solved(lam: float, p_max: float, p_avg: float) -> cap.CapacityResult:
    """Capacity solves shared across test modules."""
    return cap.capacity(PoissonChannel.for_peak(lam, p_max), PowerConstraint(p_max, p_avg), strict=True)


@pytest.fixture(scope="session")
def solve():
    return solved


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
