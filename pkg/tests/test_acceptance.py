"""Acceptance suite: one PASS/FAIL line per criterion, printed past pytest's capture.

The whole suite runs once per session (criterion 9 re-runs 1-8 and compares
the stats JSON of every scenario), and each criterion is then reported and
asserted by its own test.
"""

import pytest

from fade10g.acceptance import CRITERIA, run_all

NUMBERS = [*CRITERIA, 9]


@pytest.fixture(scope="module")
def results():
    return {r.number: r for r in run_all()}


@pytest.mark.parametrize("number", NUMBERS)
def test_criterion(number, results, capsys):
    result = results[number]
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail
