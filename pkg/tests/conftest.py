from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rageval.metrics import compute_weights
from rageval.pools import GradedPassage, GradedPool, RetrievedList

FIXTURES = Path(__file__).parent / "fixtures"

ACCEPTANCE_PREFIX = "tests/test_acceptance.py::test_criterion_"


def pytest_runtest_logreport(report):
    """One PASS/FAIL line per acceptance criterion (visible with -s)."""
    if report.when != "call" or ACCEPTANCE_PREFIX not in report.nodeid.replace("\\", "/"):
        return
    name = report.nodeid.split("::")[-1].removeprefix("test_criterion_")
    number, _, slug = name.partition("_")
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\n[acceptance] criterion {int(number)} ({slug}): {verdict}")


def make_pool(query_id: str, grades: list[int], prefix: str = "d") -> GradedPool:
    """Pool with doc ids d00, d01, ... carrying the given grades."""
    return GradedPool(
        query_id,
        [GradedPassage(f"{prefix}{i:02d}", g) for i, g in enumerate(grades)],
    )


@pytest.fixture
def worked_pool() -> GradedPool:
    """The hand-worked 20-passage pool: 2x grade5, 4x grade4, 4x grade3, 10x grade2."""
    return make_pool("q1", [5] * 2 + [4] * 4 + [3] * 4 + [2] * 10)


@pytest.fixture
def worked_weights(worked_pool):
    return compute_weights(worked_pool)


@pytest.fixture
def worked_list(worked_pool) -> RetrievedList:
    """Top-5 grades [5, 4, 4, 3, 2] against the worked pool."""
    return RetrievedList("q1", ["d00", "d02", "d03", "d06", "d10"])
