"""Acceptance suite: one pass/fail line per criterion.

Criteria 3, 5 and 10 are not met by this implementation and fail honestly.
"""
import os

import pytest

from dispersive_lab.recipes import CRITERIA, run_criterion

JOBS = max(1, min(4, os.cpu_count() or 1))


@pytest.mark.slow
@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    result = run_criterion(n, seed=0, jobs=JOBS)
    print(result.line())
    print(result.metrics)
    assert result.passed, result.line()
