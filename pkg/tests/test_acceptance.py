"""One test per acceptance criterion; each check prints a PASS/FAIL line.

The lines are also repeated in the terminal summary so they survive output capture.
"""

import pytest

from ancient_flows import acceptance

LINES: list[str] = []


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number):
    checks = acceptance.CRITERIA[number]()
    assert checks
    for chk in checks:
        line = f"[{number}] {chk.line()}"
        LINES.append(line)
        print(line)
    failed = [c.key for c in checks if not c.passed]
    assert not failed, f"failing checks: {failed}"
