"""Shared fixtures and the acceptance summary reporter."""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion_report():
    """Record one pass/fail line per acceptance criterion, then assert."""

    def report(number: int, ok: bool, detail: str) -> None:
        verdict = "PASS" if ok else "FAIL"
        ACCEPTANCE_LINES.append(f"criterion {number:2d} [{verdict}] {detail}")
        assert ok, f"criterion {number} failed: {detail}"

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
