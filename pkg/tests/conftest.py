import functools
from pathlib import Path

import numpy as np
import pytest

from harmq.cli import prepare
from harmq.spaces import catalog_spec

FIXTURES = Path(__file__).parent / "fixtures"

# one line per acceptance criterion, printed after the run
CRITERION_LINES: list[str] = []


def report_line(number, label: str, passed: bool, detail: str = "") -> str:
    line = f"criterion {number} ({label}): {'PASS' if passed else 'FAIL'}"
    if detail:
        line += f"  [{detail}]"
    CRITERION_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def space(name: str):
    """Prepared catalog space (embedding, split, Casimir data), built once per run."""
    return prepare(catalog_spec(name))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
