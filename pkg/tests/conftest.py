"""Shared fixtures and the acceptance summary printed after the run."""
from __future__ import annotations

import numpy as np
import pytest

_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def record():
    """Store one acceptance line; the terminal summary prints them in order."""

    def _record(key: str, ok: bool, detail: str) -> None:
        line = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[key] = (ok, line)
        print(line)

    return _record


def _order(key: str):
    head, _, tail = key.partition("/")
    return (int(head), tail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    keys = sorted(_CRITERIA, key=_order)
    groups: dict[int, list[bool]] = {}
    for key in keys:
        groups.setdefault(_order(key)[0], []).append(_CRITERIA[key][0])
    for num, oks in groups.items():
        verdict = "PASS" if all(oks) else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {verdict}  ({sum(oks)}/{len(oks)} checks)")
    terminalreporter.write_line("")
    for key in keys:
        terminalreporter.write_line(_CRITERIA[key][1])
