"""Run fusion and candidate-pool shaping.

Covers the two pool-construction stages between retrieval and judging:
reciprocal rank fusion of dense and sparse runs into one candidate list,
and grade-bucketed pruning of that list down to budgeted sizes. Near-
duplicate suppression is available as a pre-rerank cleanup lever.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

from rageval.pools import CandidatePool, GradedPool

logger = logging.getLogger(__name__)


@dataclass
class ScoredDoc:
    doc_id: str
    score: float


@dataclass
class RunList:
    """One system's ranking for one query, best first.

    system_label is conventionally "dense", "sparse", or a descriptive
    tag for derived runs (e.g. "fused"). Ranks are positional and
    1-based; scores must be non-increasing when present.
    """

    query_id: str
    system_label: str
    entries: list[ScoredDoc]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        prev_score: float | None = None
        for e in self.entries:
            if e.doc_id in seen:
                raise ValueError(
                    f"duplicate doc_id {e.doc_id!r} in run {self.system_label!r} "
                    f"for query {self.query_id!r}"
                )
            seen.add(e.doc_id)
            if prev_score is not None and e.score > prev_score:
                raise ValueError(
                    f"run {self.system_label!r} for query {self.query_id!r} "
                    "is not in non-increasing score order"
                )
            prev_score = e.score

    def doc_ids(self) -> list[str]:
        return [e.doc_id for e in self.entries]


@dataclass
class FusionParams:
    """Reciprocal-rank-fusion knobs: additive constant and per-list depth."""

    rrf_constant: float = 60.0
    per_list_depth: int = 100

    def __post_init__(self) -> None:
        if self.rrf_constant <= 0:
            raise ValueError(f"rrf_constant must be > 0, got {self.rrf_constant}")
        if self.per_list_depth < 1:
            raise ValueError(f"per_list_depth must be >= 1, got {self.per_list_depth}")


def rrf_merge(lists: Iterable[RunList], params: FusionParams | None = None) -> RunList:
    """Fuse rankings with reciprocal rank fusion.

    fused(d) = sum over input lists containing d of 1 / (c + rank_d),
    ranks 1-based, each list truncated to per_list_depth first. Output
    is sorted by fused score descending with ties broken by doc_id so
    manifests are deterministic.
    """
    params = params or FusionParams()
    lists = list(lists)
    if not lists:
        raise ValueError("rrf_merge needs at least one input run")
    query_id = lists[0].query_id
    for run in lists:
        if run.query_id != query_id:
            raise ValueError(
                f"cannot fuse runs for different queries: {query_id!r} vs {run.query_id!r}"
            )
    scores: dict[str, float] = {}
    for run in lists:
        for rank, entry in enumerate(run.entries[: params.per_list_depth], start=1):
            scores[entry.doc_id] = scores.get(entry.doc_id, 0.0) + 1.0 / (
                params.rrf_constant + rank
            )
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))
    return RunList(
        query_id=query_id,
        system_label="fused",
        entries=[ScoredDoc(doc_id, score) for doc_id, score in ordered],
    )


def grade_bucketed_prune(
    pool: GradedPool,
    fused: RunList,
    budget_per_grade: Mapping[int, int | None],
) -> CandidatePool:
    """Keep the top-ranked docs of each grade bucket up to its budget.

    A budget of None means unlimited. Docs absent from the graded pool
    have no bucket and are dropped. Retained docs keep their fused
    order.
    """
    for grade, budget in budget_per_grade.items():
        if budget is not None and budget < 0:
            raise ValueError(f"budget for grade {grade} must be >= 0, got {budget}")
    taken = {g: 0 for g in range(1, 6)}
    kept: list[str] = []
    for doc_id in fused.doc_ids():
        grade = pool.grade_of(doc_id)
        if grade is None:
            continue
        budget = budget_per_grade.get(grade, None)
        if budget is not None and taken[grade] >= budget:
            continue
        taken[grade] += 1
        kept.append(doc_id)
    label = "prune[" + ",".join(
        f"{g}:{'*' if budget_per_grade.get(g) is None else budget_per_grade.get(g)}"
        for g in range(5, 0, -1)
    ) + "]"
    if not kept:
        raise ValueError(
            f"pruning left no candidates for query {pool.query_id!r}; "
            "budgets are all zero or the fused run has no graded docs"
        )
    return CandidatePool(query_id=pool.query_id, doc_ids=kept, provenance_label=label)


def _shingles(text: str, k: int = 8) -> frozenset[str]:
    if len(text) < k:
        return frozenset((text,))
    return frozenset(text[i : i + k] for i in range(len(text) - k + 1))


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def near_duplicate_suppress(
    fused: RunList,
    texts: Mapping[str, str],
    jaccard_threshold: float,
    shingle_size: int = 8,
) -> RunList:
    """Drop lower-ranked docs that are near-duplicates of retained ones.

    Similarity is Jaccard over character shingles. Docs without text are
    retained with a warning (we cannot judge them). The scan is in rank
    order, which makes the operation idempotent.
    """
    if not 0 < jaccard_threshold <= 1:
        raise ValueError(
            f"jaccard_threshold must be in (0, 1], got {jaccard_threshold}"
        )
    kept: list[ScoredDoc] = []
    kept_shingles: list[frozenset[str]] = []
    for entry in fused.entries:
        text = texts.get(entry.doc_id)
        if text is None:
            logger.warning(
                "no text for doc %r in query %r; retained without dedupe check",
                entry.doc_id,
                fused.query_id,
            )
            kept.append(entry)
            continue
        sh = _shingles(text, shingle_size)
        if any(_jaccard(sh, other) >= jaccard_threshold for other in kept_shingles):
            continue
        kept.append(entry)
        kept_shingles.append(sh)
    return RunList(query_id=fused.query_id, system_label=fused.system_label, entries=kept)
