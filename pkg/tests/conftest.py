import contextlib
import time

import pytest

ACCEPTANCE_LINES = []


class _Criterion:
    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.checks = []  # (ok, text)

    def check(self, ok, text):
        self.checks.append((bool(ok), text))

    @property
    def ok(self):
        return bool(self.checks) and all(ok for ok, _ in self.checks)


@pytest.fixture
def criterion(capsys):
    """Context manager that records one PASS/FAIL line per acceptance criterion."""

    @contextlib.contextmanager
    def run(number, title):
        crit = _Criterion(number, title)
        start = time.perf_counter()
        error = None
        try:
            yield crit
        except Exception as exc:  # reported as a failure line, then re-raised
            error = exc
            raise
        finally:
            elapsed = time.perf_counter() - start
            status = "PASS" if crit.ok and error is None else "FAIL"
            details = "; ".join(("" if ok else "FAILED: ") + text for ok, text in crit.checks)
            if error is not None:
                details = (details + "; " if details else "") + f"error: {error!r}"
            line = f"[{status}] criterion {number}: {title} ({elapsed:.1f}s) -- {details}"
            ACCEPTANCE_LINES.append(line)
            with capsys.disabled():
                print("\n" + line)
        assert crit.ok, f"criterion {number} failed: {details}"

    return run


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
