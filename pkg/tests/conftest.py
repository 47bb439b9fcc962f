from __future__ import annotations

from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
CACHE = REPO / "cache"

# (criterion, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def cache_dir() -> Path:
    return CACHE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
