from __future__ import annotations

import pytest

_RESULTS: dict[int, list[tuple[bool, str]]] = {}


def record(number: int, passed: bool, detail: str) -> None:
    _RESULTS.setdefault(number, []).append((bool(passed), detail))


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        parts = _RESULTS[number]
        state = "PASS" if all(p for p, _ in parts) else "FAIL"
        terminalreporter.write_line(f"CRITERION {number}: {state}  " + "; ".join(d for _, d in parts))
