"""Acceptance criteria at their stated tolerances and runtime budgets.

Each test prints one ``CRITERION n [PASS|FAIL] ...`` line, also visible under
output capture, and fails when the criterion fails.
"""
import pytest

from betagas.acceptance import CRITERIA, run_criteria


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    (result,) = run_criteria([number])
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
