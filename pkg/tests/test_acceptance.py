"""The ten acceptance criteria at their stated tolerances and budgets.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Run directly (``python tests/test_acceptance.py``) to get
just the lines.
"""
import os

import pytest

from runtumble.config import Tolerances, VerifySettings
from runtumble.verify import CRITERIA, run_all

from conftest import ACCEPTANCE_LINES

THREADS = min(4, os.cpu_count() or 1)
# criteria with a stated wall-clock budget, in seconds
TIME_LIMITS = {1: 1.0, 2: 30.0, 4: 60.0, 5: 1.0, 7: 30.0}


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number):
    (result,) = run_all(Tolerances(), VerifySettings(), threads=THREADS, only=[number])
    line = result.line()
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert result.passed, f"{line}\n{result.details}"
    if number in TIME_LIMITS:
        assert result.seconds < TIME_LIMITS[number], f"criterion {number} took {result.seconds:.2f} s"


if __name__ == "__main__":
    for r in run_all(Tolerances(), VerifySettings(), threads=THREADS):
        print(r.line())
