"""Acceptance gate: every criterion runs at its stated tolerance.

Each test prints the machine-readable result line, the same format the
`loomxai accept` subcommand emits.
"""

import pytest

from loomxai.acceptance import CRITERIA, SUITES, UnknownSuite, run_suite


@pytest.mark.parametrize("name", list(CRITERIA))
def test_criterion(name):
    result = CRITERIA[name]()
    print(result.to_line())
    assert result.passed, result.measured


def test_all_suite_covers_every_criterion_exactly_once():
    assert SUITES["all"] == list(CRITERIA)
    assert len(set(SUITES["all"])) == len(SUITES["all"])


def test_unknown_suite_rejected():
    with pytest.raises(UnknownSuite):
        run_suite("nope")
