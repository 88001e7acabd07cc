import pytest

from litematte.checks import CHECKS, run_check

RESULTS = []


@pytest.mark.parametrize("number", [num for num, _, _ in CHECKS],
                         ids=[f"{num:02d}-{name.replace(' ', '-')}" for num, name, _ in CHECKS])
def test_criterion(number):
    result = run_check(number)
    RESULTS.append(result)
    print(result.line())
    assert result.passed, result.line()
