import time

import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


class Criterion:
    """Times one acceptance criterion and records a single PASS/FAIL line."""

    def __init__(self, number: int, limit_s: float):
        self.number = number
        self.limit_s = limit_s
        self.start = time.perf_counter()

    def report(self, passed: bool, detail: str) -> bool:
        elapsed = time.perf_counter() - self.start
        in_time = elapsed < self.limit_s
        ok = bool(passed and in_time)
        timing = f"{elapsed:.1f}s of {self.limit_s:.0f}s"
        if not in_time:
            timing += " (over budget)"
        line = f"criterion {self.number:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{timing}]"
        _RESULTS[self.number] = (ok, line)
        print(line)
        return ok


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        terminalreporter.write_line(_RESULTS[k][1])
