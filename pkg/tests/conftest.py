"""Shared fixtures and the acceptance-criteria report."""

from __future__ import annotations

import numpy as np
import pytest

from mcsa.features import load_fixtures
from mcsa.motor import REFERENCE_MOTOR

ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def fixtures():
    return load_fixtures()


@pytest.fixture
def motor():
    return REFERENCE_MOTOR


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def report():
    """Record one acceptance line, then assert it."""

    def _report(criterion: str, ok: bool, detail: str = ""):
        ACCEPTANCE_RESULTS.append((criterion, bool(ok), detail))
        assert ok, f"{criterion}: {detail}"

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {criterion}  {detail}")
