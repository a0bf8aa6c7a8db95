"""Shared fixtures: the hand-enumerable 4-row dataset and COMPAS.

Also hosts the acceptance-criteria scoreboard: acceptance tests record
their criterion's outcome and a terminal summary section prints one
pass/fail line per criterion at the end of the run.
"""

from __future__ import annotations

import functools
from pathlib import Path

import pytest

from fairaudit import Dataset, Row, load_config, load_csv

PKG_ROOT = Path(__file__).resolve().parent.parent
COMPAS_CSV = PKG_ROOT / "data" / "compas-scores-two-years.csv"
COMPAS_CONFIG = PKG_ROOT / "configs" / "compas.json"
COMPAS_TWO_YEAR_CONFIG = PKG_ROOT / "configs" / "compas-two-year.json"


def make_dataset(rows: list[dict[str, str]], header=None) -> Dataset:
    if header is None:
        header = tuple(rows[0]) if rows else ()
    return Dataset(header=tuple(header), rows=tuple(Row(r) for r in rows))


@pytest.fixture
def four_rows() -> Dataset:
    """Two privileged rows r1 r2, two unprivileged r3 r4.

    Predictions 1,0,1,1 and truths 1,0,0,1 give hand-checkable measures:
    predictive_equality 1.0, equal_opportunity 0.0, accuracy gap 0.5."""
    return make_dataset(
        [
            {"name": "r1", "grp": "1", "pred": "1", "truth": "1", "score": "10"},
            {"name": "r2", "grp": "1", "pred": "0", "truth": "0", "score": "2"},
            {"name": "r3", "grp": "0", "pred": "1", "truth": "0", "score": "4"},
            {"name": "r4", "grp": "0", "pred": "1", "truth": "1", "score": "8"},
        ]
    )


@pytest.fixture(scope="session")
def compas_dataset() -> Dataset:
    return load_csv(COMPAS_CSV)


@pytest.fixture(scope="session")
def compas_config():
    return load_config(COMPAS_CONFIG)


@pytest.fixture(scope="session")
def compas_two_year_config():
    return load_config(COMPAS_TWO_YEAR_CONFIG)


# ---------------------------------------------------------------------------
# Acceptance criteria scoreboard

_CRITERIA: dict[int, tuple[str, bool]] = {}


def record_criterion(number: int, name: str, passed: bool) -> None:
    previous = _CRITERIA.get(number)
    if previous is not None and previous[1] is False:
        passed = False
    _CRITERIA[number] = (name, passed)


def criterion(number: int, name: str):
    """Mark a test as (part of) one acceptance criterion.

    The criterion line reads FAIL if any contributing test raises."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                result = fn(*args, **kwargs)
            except BaseException:
                record_criterion(number, name, False)
                raise
            record_criterion(number, name, True)
            return result

        return run

    return wrap


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        name, passed = _CRITERIA[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {number} ({name}): {verdict}")
