"""Shared fixtures, plus end-of-run reporting for the acceptance suite."""

import pytest

_ACCEPTANCE_LINES = []


class _CriterionRecord:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.ok = False
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            status = "FAIL"
            detail = self.detail or f"errored: {exc_type.__name__}: {exc}"
        else:
            status = "PASS" if self.ok else "FAIL"
            detail = self.detail
        _ACCEPTANCE_LINES.append(
            f"criterion {self.number:2d} {status}  {self.title}: {detail}"
        )
        if exc_type is None and not self.ok:
            raise AssertionError(f"criterion {self.number} failed: {detail}")
        return False


@pytest.fixture
def criterion():
    """Context-manager factory: one pass/fail summary line per criterion."""
    return _CriterionRecord


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
