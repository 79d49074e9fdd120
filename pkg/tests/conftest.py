"""Collects acceptance verdicts and prints them at the end of the run."""

import pytest

VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    def record(n: int, checks: list[tuple[str, bool]], seconds: float, limit: float | None = None):
        if limit is not None:
            checks = checks + [(f"runtime {seconds:.1f}s < {limit:g}s", seconds < limit)]
        ok = all(c[1] for c in checks)
        failed = [name for name, good in checks if not good]
        VERDICTS[n] = (ok, f"{seconds:.1f}s" + (f"; failed: {'; '.join(failed)}" if failed else ""))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(VERDICTS):
        ok, detail = VERDICTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
