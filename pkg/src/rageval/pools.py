"""Graded pools, retrieved lists, and related record types.

A graded pool is the per-query set of passages with 1-5 utility grades;
everything downstream (weights, metrics, ceilings, pruning) reads counts
and grades from here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

GRADE_MIN = 1
GRADE_MAX = 5
GRADES = (1, 2, 3, 4, 5)


@dataclass
class GradedPassage:
    """One graded passage: opaque doc_id, utility grade, optional facet key.

    The facet key groups near-duplicate sources for the novelty discount;
    a missing key means the passage counts as its own facet.
    """

    doc_id: str
    grade: int
    facet_key: str | None = None

    def __post_init__(self) -> None:
        if not isinstance(self.grade, int) or isinstance(self.grade, bool):
            raise ValueError(f"grade must be an integer, got {self.grade!r}")
        if not GRADE_MIN <= self.grade <= GRADE_MAX:
            raise ValueError(
                f"grade must be in [{GRADE_MIN}, {GRADE_MAX}], got {self.grade}"
            )


@dataclass
class GradedPool:
    """Per-query set of graded passages.

    Invariants enforced at construction: at least one passage, unique
    doc_ids, grades in 1..5 (via GradedPassage).
    """

    query_id: str
    passages: list[GradedPassage]
    _grades: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.passages:
            raise ValueError(f"pool for query {self.query_id!r} is empty")
        self._grades = {}
        for p in self.passages:
            if p.doc_id in self._grades:
                raise ValueError(
                    f"duplicate doc_id {p.doc_id!r} in pool for query {self.query_id!r}"
                )
            self._grades[p.doc_id] = p.grade

    @property
    def size(self) -> int:
        return len(self.passages)

    def grade_counts(self) -> dict[int, int]:
        """Count of passages per grade, zero-filled for all five grades."""
        counts = {g: 0 for g in GRADES}
        for p in self.passages:
            counts[p.grade] += 1
        return counts

    def prevalence(self, grade: int) -> float:
        """Fraction of the pool holding the given grade."""
        return self.grade_counts()[grade] / self.size

    def grade_of(self, doc_id: str) -> int | None:
        """Grade of a pooled doc, or None for doc_ids outside the pool."""
        return self._grades.get(doc_id)

    def doc_ids(self) -> set[str]:
        return set(self._grades)

    def count_at_least(self, min_grade: int) -> int:
        """Number of pooled passages with grade >= min_grade."""
        return sum(1 for p in self.passages if p.grade >= min_grade)


@dataclass
class RetrievedList:
    """Ordered ranking of doc_ids for one query; duplicates forbidden."""

    query_id: str
    ranking: list[str]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc_id in self.ranking:
            if doc_id in seen:
                raise ValueError(
                    f"duplicate doc_id {doc_id!r} in ranking for query {self.query_id!r}"
                )
            seen.add(doc_id)

    def top_k(self, k: int) -> list[str]:
        """First min(k, len) entries, viewed as the scored prefix."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        return self.ranking[:k]


@dataclass
class AnswerRecord:
    """Gold evidence set (grade >= 4 docs) plus optional answer correctness."""

    query_id: str
    gold_evidence: set[str]
    answer_correct: bool | None = None


@dataclass
class CandidatePool:
    """Fixed candidate set for one query, e.g. a dense top-100 or hybrid top-50.

    Order is preserved from construction (useful for provenance and
    deterministic output), but ceiling computations treat it as a set.
    """

    query_id: str
    doc_ids: list[str]
    provenance_label: str = ""

    def __post_init__(self) -> None:
        if not self.doc_ids:
            raise ValueError(f"candidate pool for query {self.query_id!r} is empty")
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError(
                f"duplicate doc_ids in candidate pool for query {self.query_id!r}"
            )

    @property
    def size(self) -> int:
        return len(self.doc_ids)

    def as_set(self) -> set[str]:
        return set(self.doc_ids)
