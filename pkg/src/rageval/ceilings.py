"""Pool-restricted oracle ceilings and headroom classification.

The ceiling of a metric at K is the best value any reordering of a fixed
candidate pool could reach, normalized against the *full* graded pool
(so a ceiling below 1.0 means the candidate pool itself is missing
evidence, not just misordering it). Realized share = actual / ceiling.

Reading the two numbers together tells an operator which knob to turn:
a low ceiling means retrieval must improve the pool; a high ceiling with
a low realized share means ordering (reranking) is the bottleneck.
"""

from __future__ import annotations

from dataclasses import dataclass

from rageval.metrics import (
    N_RECALL_4PLUS,
    N_RECALL_5,
    RA_NWG,
    WeightSchedule,
    ideal_gain,
)
from rageval.pools import CandidatePool, GradedPool

RETRIEVAL = "retrieval"
ORDERING = "ordering"
NONE = "none"

_TOL = 1e-9


def proc_ra_nwg(
    pool: GradedPool, weights: WeightSchedule, candidates: CandidatePool, k: int
) -> float | None:
    """Ceiling of the normalized weighted gain when restricted to candidates.

    Best subset of size min(K, |candidates|) drawn only from the
    candidate pool, over the full-pool ideal gain at K. None (NA) when
    the full-pool ideal is 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ideal = ideal_gain(pool, weights, k)
    if ideal == 0.0:
        return None
    candidate_weights = sorted(
        (
            weights.for_grade(g)
            for doc_id in candidates.doc_ids
            if (g := pool.grade_of(doc_id)) is not None
        ),
        reverse=True,
    )
    best = sum(candidate_weights[: min(k, candidates.size)])
    return best / ideal


def proc_n_recall(
    pool: GradedPool, candidates: CandidatePool, k: int, min_grade: int = 4
) -> float | None:
    """Ceiling of normalized recall when restricted to candidates.

    Best achievable hit count from the candidate pool over the full-pool
    min(K, R) denominator. None (NA) when the pool has no qualifying
    passages at all.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    r = pool.count_at_least(min_grade)
    if r == 0:
        return None
    qualifying = sum(
        1
        for doc_id in candidates.doc_ids
        if (g := pool.grade_of(doc_id)) is not None and g >= min_grade
    )
    best_hits = min(k, qualifying)
    return best_hits / min(k, r)


def proc(
    pool: GradedPool,
    weights: WeightSchedule,
    candidates: CandidatePool,
    k: int,
    metric: str = RA_NWG,
) -> float | None:
    """Ceiling for one of the supported metrics at cut K."""
    if metric == RA_NWG:
        return proc_ra_nwg(pool, weights, candidates, k)
    if metric == N_RECALL_4PLUS:
        return proc_n_recall(pool, candidates, k, 4)
    if metric == N_RECALL_5:
        return proc_n_recall(pool, candidates, k, 5)
    raise ValueError(f"no ceiling defined for metric {metric!r}")


def percent_proc(actual: float, ceiling: float) -> float | None:
    """Realized fraction of the ceiling; None (NA) when the ceiling is 0.

    An actual value above the ceiling (beyond tolerance) signals
    inconsistent inputs and is rejected.
    """
    if actual < 0:
        raise ValueError(f"actual must be >= 0, got {actual}")
    if actual > ceiling + _TOL:
        raise ValueError(
            f"actual {actual} exceeds ceiling {ceiling}; inputs are inconsistent"
        )
    if ceiling == 0:
        return None
    return min(actual / ceiling, 1.0)


def headroom_classify(
    ceiling: float,
    realized: float | None,
    proc_threshold: float = 0.95,
    realization_threshold: float = 0.90,
) -> str:
    """Classify where the headroom is.

    'retrieval' when the ceiling itself is below proc_threshold (the
    candidate pool is the problem); 'ordering' when the ceiling is fine
    but the realized share lags realization_threshold; 'none' otherwise.
    """
    if not 0 < proc_threshold < 1 or not 0 < realization_threshold < 1:
        raise ValueError("thresholds must lie in (0, 1)")
    if ceiling < proc_threshold:
        return RETRIEVAL
    if realized is None or realized < realization_threshold:
        return ORDERING
    return NONE


@dataclass
class CeilingRow:
    """Actual / ceiling / realized triple for one (query, metric, K)."""

    query_id: str
    metric: str
    k: int
    actual: float | None
    ceiling: float | None
    realized: float | None
    headroom: str | None


def ceiling_row(
    pool: GradedPool,
    weights: WeightSchedule,
    candidates: CandidatePool,
    metric: str,
    k: int,
    actual: float | None,
    proc_threshold: float = 0.95,
    realization_threshold: float = 0.90,
) -> CeilingRow:
    """Assemble one report row; NA actual/ceiling propagates to NA outputs."""
    ceiling = proc(pool, weights, candidates, k, metric)
    if ceiling is None or actual is None:
        return CeilingRow(pool.query_id, metric, k, actual, ceiling, None, None)
    realized = percent_proc(actual, ceiling)
    headroom = headroom_classify(ceiling, realized, proc_threshold, realization_threshold)
    return CeilingRow(pool.query_id, metric, k, actual, ceiling, realized, headroom)
