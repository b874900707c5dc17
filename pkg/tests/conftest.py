import time
from contextlib import contextmanager

import pytest

_CRITERIA_LINES = []


class Criterion:
    """Collects failures for one acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.failures = []

    def check(self, ok, message):
        if not ok:
            self.failures.append(message)

    def report(self, rep):
        """Record a :class:`artifact.reports.CheckReport`; only PASS counts."""
        self.check(rep.ok, rep.line())


@pytest.fixture
def criterion():
    """``with criterion(n, title, limit) as c: ...`` prints one line
    ``criterion n PASS|FAIL title (seconds)`` and fails the test on any
    recorded failure, exception or exceeded time limit."""

    @contextmanager
    def run(number, title, limit=None):
        c = Criterion(number, title)
        start = time.perf_counter()
        error = None
        try:
            yield c
        except Exception as exc:  # reported below, then re-raised
            error = exc
            c.failures.append(f"{type(exc).__name__}: {exc}")
        elapsed = time.perf_counter() - start
        if limit is not None and elapsed >= limit:
            c.failures.append(f"took {elapsed:.1f}s, limit {limit}s")
        status = "FAIL" if c.failures else "PASS"
        line = f"criterion {number:2d} {status} {title} ({elapsed:.2f}s)"
        if c.failures:
            line += ": " + c.failures[0]
        print(line)
        _CRITERIA_LINES.append(line)
        if error is not None:
            raise error
        assert not c.failures, "\n".join(c.failures)

    return run


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
