"""Runs each acceptance criterion at its stated tolerance and time budget.

One PASS/FAIL line per criterion is printed in the terminal summary.
"""
import pytest

from levy_lab.acceptance import CRITERIA

from conftest import ACCEPTANCE_LINES


@pytest.mark.acceptance
@pytest.mark.parametrize("criterion", CRITERIA, ids=lambda c: c.__name__)
def test_acceptance(criterion):
    res = criterion()
    ACCEPTANCE_LINES.append(res.line())
    print(res.line())
    assert res.passed, res.detail
    assert res.runtime < res.budget, f"{res.runtime:.1f}s exceeds {res.budget:.0f}s"
