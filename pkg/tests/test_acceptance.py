"""Exit criteria; each test prints its PASS/FAIL line (run with -s to see them)."""

import pytest

from mipsim import acceptance


@pytest.mark.parametrize("check", acceptance.CHECKS, ids=lambda c: c.__name__)
def test_criterion(check):
    result = check()
    print(result.line())
    assert result.passed, result.line()


def test_bfs_oracle_agrees_with_known_path(topo):
    p = acceptance.bfs_path(topo, acceptance.A("0.0.0"), acceptance.A("1.5.0"))
    assert p == acceptance.REF_SHA_PATH
