import sys
import time

import pytest

sys.path.insert(0, __file__.rsplit("/", 1)[0])

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion.

    Usage: ``criterion(number, ok, detail)``.  Lines are printed as they are
    recorded and again in the terminal summary, so they appear even when
    output is captured.
    """
    start = time.perf_counter()

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - start:.1f}s)"
        _LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
