"""Acceptance suite: runs every registered check at its stated tolerance and
prints one pass/fail line per criterion (run with -s or -v to see them)."""

import pytest

from ebmlab.checks import CHECKS, EXPECTED_REPORT_ROWS, EXPECTED_ROWS_PER_CHECK

_RESULTS: dict[str, list] = {}


def _rows_for(name: str):
    if name not in _RESULTS:
        check = next(c for c in CHECKS if c.name == name)
        _RESULTS[name] = check.fn()
    return _RESULTS[name]


@pytest.mark.parametrize("check", CHECKS, ids=lambda c: c.name)
def test_acceptance_criterion(check):
    rows = _rows_for(check.name)
    assert len(rows) == EXPECTED_ROWS_PER_CHECK[check.name]
    failed = [row for row in rows if row.passed is False]
    status = "FAIL" if failed else "PASS"
    print(f"ACCEPTANCE {status} {check.name}")
    for row in rows:
        mark = {True: "pass", False: "FAIL", None: " -- "}[row.passed]
        print(f"    [{mark}] {row.property} = {row.measured:.6g} {row.tolerance}")
    assert not failed, [row.property for row in failed]


def test_report_row_count_matches_documentation():
    total = sum(len(_rows_for(c.name)) for c in CHECKS)
    assert total == EXPECTED_REPORT_ROWS
