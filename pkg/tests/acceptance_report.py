"""Shared collector for the acceptance suite's one-line-per-criterion verdicts.

Lives outside conftest.py so that both conftest (which prints the lines in the
terminal summary) and test_acceptance (which appends them) import the same
module object.
"""

LINES: list[str] = []
