import pytest

from acceptance_log import RESULTS


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, name, detail = RESULTS[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  [{n:>2}] {name}: {detail}")
