"""Rarity-aware set metrics over graded pools and retrieved lists.

Per query, grades map to weights by inverse prevalence with caps:

    r_g = b_g / p_g^alpha          (r_g = 0 when p_g = 0)
    w5 = 1, w4 = min(r4/r5, cap4), w3 = min(r3/r5, cap3), w2 = w1 = 0

and when the pool has no grade-5 at all, a fixed fallback schedule
(1, 1, 0.2, 0, 0) keeps the metric informative.

The headline score is the observed top-K weighted gain over the pool's
oracle top-K gain, a [0,1] set score that is order-free within the cut
and comparable across queries with different label mixes. Companion
metrics cover normalized recall of high-grade evidence, precision, and
a harm rate for low-grade contamination.

NA handling: metrics whose denominator is zero return None, and the
macro aggregator averages only over non-None rows, reporting the count
of valid queries.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from rageval.pools import AnswerRecord, GradedPool, RetrievedList

# Canonical metric names used in rows, quality maps, and reports.
RA_NWG = "ra_nwg"
N_RECALL_4PLUS = "n_recall_4plus"
N_RECALL_5 = "n_recall_5"
PRECISION_4PLUS = "precision_4plus"
HARM = "harm"

STANDARD_METRICS = (RA_NWG, N_RECALL_4PLUS, N_RECALL_5, PRECISION_4PLUS, HARM)


def quality_key(metric: str, k: int) -> str:
    """Key for per-cut quality values, e.g. ``ra_nwg@10``."""
    return f"{metric}@{k}"


@dataclass
class RarityParams:
    """Knobs for the grade -> weight mapping.

    alpha=1 scales mid-grades by inverse prevalence; alpha=0 disables
    rarity and recovers the base utilities. Caps bound how far grade-4/3
    can rise so grade-5 always dominates.
    """

    alpha: float = 1.0
    cap4: float = 1.0
    cap3: float = 0.25
    base_utilities: dict[int, float] = field(
        default_factory=lambda: {5: 1.0, 4: 0.5, 3: 0.1, 2: 0.0, 1: 0.0}
    )

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not 0 < self.cap3 <= self.cap4 <= 1:
            raise ValueError(
                f"caps must satisfy 0 < cap3 <= cap4 <= 1, got cap3={self.cap3} cap4={self.cap4}"
            )
        b = self.base_utilities
        if set(b) != {1, 2, 3, 4, 5}:
            raise ValueError("base_utilities must cover grades 1..5")
        if b[5] != 1.0:
            raise ValueError(f"base utility of grade 5 must be 1, got {b[5]}")
        if not b[5] >= b[4] >= b[3] >= b[2] >= b[1] >= 0:
            raise ValueError("base utilities must be non-increasing from grade 5 to 1")


@dataclass
class WeightSchedule:
    """Per-query weights for grades 5..1 plus the fallback marker."""

    w5: float
    w4: float
    w3: float
    w2: float
    w1: float
    used_fallback: bool

    def for_grade(self, grade: int) -> float:
        return (self.w1, self.w2, self.w3, self.w4, self.w5)[grade - 1]

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.w5, self.w4, self.w3, self.w2, self.w1)


def compute_weights(pool: GradedPool, params: RarityParams | None = None) -> WeightSchedule:
    """Derive the weight schedule for one pool.

    With grade-5 present: r_g = b_g / p_g^alpha (0 when the grade is
    absent), then w4/w3 are normalized by r5 and capped. Without any
    grade-5 the fixed fallback (1, 1, 0.2, 0, 0) applies.
    """
    params = params or RarityParams()
    if pool.size < 1:
        raise ValueError("cannot compute weights for an empty pool")
    counts = pool.grade_counts()
    if counts[5] == 0:
        return WeightSchedule(w5=1.0, w4=1.0, w3=0.2, w2=0.0, w1=0.0, used_fallback=True)

    def rarity(grade: int) -> float:
        n_g = counts[grade]
        if n_g == 0:
            return 0.0
        p_g = n_g / pool.size
        return params.base_utilities[grade] / p_g ** params.alpha

    r5 = rarity(5)
    # b5 = 1 and p5 > 0 here, so r5 > 0 always.
    assert r5 > 0, "rarity of grade 5 must be positive when n5 > 0"
    w4 = min(rarity(4) / r5, params.cap4)
    w3 = min(rarity(3) / r5, params.cap3)
    return WeightSchedule(w5=1.0, w4=w4, w3=w3, w2=0.0, w1=0.0, used_fallback=False)


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")


def observed_gain(
    pool: GradedPool, weights: WeightSchedule, retrieved: RetrievedList, k: int
) -> float:
    """Sum of grade weights over the retrieved top-K.

    Doc_ids outside the graded pool contribute weight 0 (an ungraded
    retrieved item cannot count as evidence).
    """
    _check_k(k)
    total = 0.0
    for doc_id in retrieved.top_k(k):
        grade = pool.grade_of(doc_id)
        if grade is not None:
            total += weights.for_grade(grade)
    return total


def ideal_gain(pool: GradedPool, weights: WeightSchedule, k: int) -> float:
    """Best achievable top-K gain: the min(K, N) largest weights in the pool."""
    _check_k(k)
    per_passage = sorted(
        (weights.for_grade(p.grade) for p in pool.passages), reverse=True
    )
    return sum(per_passage[: min(k, pool.size)])


def ra_nwg_at_k(
    pool: GradedPool, weights: WeightSchedule, retrieved: RetrievedList, k: int
) -> float | None:
    """Observed over ideal top-K gain; None (NA) when the ideal gain is 0."""
    ideal = ideal_gain(pool, weights, k)
    if ideal == 0.0:
        return None
    return observed_gain(pool, weights, retrieved, k) / ideal


def n_recall_at_k(
    pool: GradedPool, retrieved: RetrievedList, k: int, min_grade: int = 4
) -> float | None:
    """Normalized recall of high-grade evidence at K.

    hits / min(K, R) where R counts pooled passages with grade >=
    min_grade; the min(K, R) denominator keeps small pools from being
    unfairly penalized. None (NA) when R = 0.
    """
    _check_k(k)
    r = pool.count_at_least(min_grade)
    if r == 0:
        return None
    hits = sum(
        1
        for doc_id in retrieved.top_k(k)
        if (g := pool.grade_of(doc_id)) is not None and g >= min_grade
    )
    return hits / min(k, r)


def precision4plus_at_k(pool: GradedPool, retrieved: RetrievedList, k: int) -> float:
    """Fraction of the top-K that is grade >= 4; denominator is K even for short lists."""
    _check_k(k)
    hits = sum(
        1
        for doc_id in retrieved.top_k(k)
        if (g := pool.grade_of(doc_id)) is not None and g >= 4
    )
    return hits / k


def harm_at_k(pool: GradedPool, retrieved: RetrievedList, k: int) -> float:
    """Fraction of the top-K with grade <= 2.

    Ungraded doc_ids count as harmful: an unvetted passage in the prompt
    is treated conservatively.
    """
    _check_k(k)
    harmful = 0
    for doc_id in retrieved.top_k(k):
        grade = pool.grade_of(doc_id)
        if grade is None or grade <= 2:
            harmful += 1
    return harmful / k


def ungraded_in_top_k(pool: GradedPool, retrieved: RetrievedList, k: int) -> int:
    """How many retrieved top-K doc_ids are absent from the graded pool."""
    _check_k(k)
    return sum(1 for doc_id in retrieved.top_k(k) if pool.grade_of(doc_id) is None)


def novelty_observed_gain(
    pool: GradedPool,
    weights: WeightSchedule,
    retrieved: RetrievedList,
    k: int,
    beta: float,
) -> float:
    """Observed gain with facet repeats discounted by beta in [0, 1).

    The first retrieved passage of each facet contributes its full
    weight; later passages of the same facet contribute beta times
    theirs. Passages without a facet key are their own facet.
    """
    _check_k(k)
    if not 0 <= beta < 1:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
    facets: dict[str, GradedPassage] = {
        p.doc_id: p for p in pool.passages
    }
    seen: set[str] = set()
    total = 0.0
    for doc_id in retrieved.top_k(k):
        passage = facets.get(doc_id)
        if passage is None:
            continue
        facet = passage.facet_key if passage.facet_key is not None else doc_id
        discount = beta if facet in seen else 1.0
        seen.add(facet)
        total += discount * weights.for_grade(passage.grade)
    return total


def hit_at_k(answer: AnswerRecord, retrieved: RetrievedList, k: int) -> bool | None:
    """True iff every gold evidence doc is inside the top-K; None for empty gold sets."""
    _check_k(k)
    if not answer.gold_evidence:
        return None
    return answer.gold_evidence <= set(retrieved.top_k(k))


def acc_given_hit(
    answers: Iterable[AnswerRecord],
    lists: Mapping[str, RetrievedList],
    k: int,
) -> float | None:
    """Mean answer correctness over queries whose full gold set was retrieved.

    None (NA) when no query hits. A hit query without a correctness
    label is an input error, since the conditional mean is undefined.
    """
    _check_k(k)
    hits = 0
    correct = 0
    for answer in answers:
        retrieved = lists.get(answer.query_id)
        if retrieved is None:
            raise ValueError(f"no retrieved list for query {answer.query_id!r}")
        hit = hit_at_k(answer, retrieved, k)
        if not hit:
            continue
        if answer.answer_correct is None:
            raise ValueError(
                f"query {answer.query_id!r} hit at k={k} but has no correctness label"
            )
        hits += 1
        correct += int(answer.answer_correct)
    if hits == 0:
        return None
    return correct / hits


@dataclass
class QueryMetricRow:
    """One per-query metric value; value None marks NA (zero denominator)."""

    query_id: str
    metric: str
    k: int
    value: float | None


@dataclass
class MacroSummary:
    """Macro-average over queries plus the number of valid (non-NA) rows."""

    mean: float | None
    valid_count: int


def macro_aggregate(rows: Iterable[QueryMetricRow]) -> dict[tuple[str, int], MacroSummary]:
    """Group rows by (metric, K) and macro-average the non-NA values.

    Groups where every row is NA report mean None with count 0.
    """
    groups: dict[tuple[str, int], list[float | None]] = {}
    for row in rows:
        groups.setdefault((row.metric, row.k), []).append(row.value)
    out: dict[tuple[str, int], MacroSummary] = {}
    for key, values in groups.items():
        valid = [v for v in values if v is not None]
        if valid:
            out[key] = MacroSummary(mean=sum(valid) / len(valid), valid_count=len(valid))
        else:
            out[key] = MacroSummary(mean=None, valid_count=0)
    return out


def score_query(
    pool: GradedPool,
    retrieved: RetrievedList,
    ks: Iterable[int],
    params: RarityParams | None = None,
) -> list[QueryMetricRow]:
    """Standard per-query metric rows (all five metrics at every cut)."""
    weights = compute_weights(pool, params)
    rows: list[QueryMetricRow] = []
    for k in ks:
        rows.append(QueryMetricRow(pool.query_id, RA_NWG, k, ra_nwg_at_k(pool, weights, retrieved, k)))
        rows.append(
            QueryMetricRow(pool.query_id, N_RECALL_4PLUS, k, n_recall_at_k(pool, retrieved, k, 4))
        )
        rows.append(
            QueryMetricRow(pool.query_id, N_RECALL_5, k, n_recall_at_k(pool, retrieved, k, 5))
        )
        rows.append(
            QueryMetricRow(pool.query_id, PRECISION_4PLUS, k, precision4plus_at_k(pool, retrieved, k))
        )
        rows.append(QueryMetricRow(pool.query_id, HARM, k, harm_at_k(pool, retrieved, k)))
    return rows
