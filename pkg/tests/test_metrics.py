"""Spec'd examples for gains, metrics, NA handling, and aggregation."""

from __future__ import annotations

import pytest

from conftest import make_pool
from rageval.metrics import (
    QueryMetricRow,
    acc_given_hit,
    compute_weights,
    harm_at_k,
    hit_at_k,
    ideal_gain,
    macro_aggregate,
    n_recall_at_k,
    novelty_observed_gain,
    observed_gain,
    precision4plus_at_k,
    ra_nwg_at_k,
    score_query,
)
from rageval.pools import AnswerRecord, GradedPassage, GradedPool, RetrievedList

TOL = 1e-9


def test_observed_gain_worked_example(worked_pool, worked_weights, worked_list):
    # grades [5,4,4,3,2] with w = (1, 0.25, 0.05) -> 1.55
    assert abs(observed_gain(worked_pool, worked_weights, worked_list, 5) - 1.55) < TOL


def test_observed_gain_empty_ranking(worked_pool, worked_weights):
    empty = RetrievedList("q1", [])
    assert observed_gain(worked_pool, worked_weights, empty, 5) == 0.0


def test_observed_gain_all_grade1():
    pool = make_pool("q", [5, 1, 1, 1])
    w = compute_weights(pool)
    lst = RetrievedList("q", ["d01", "d02", "d03"])
    assert observed_gain(pool, w, lst, 3) == 0.0


def test_observed_gain_order_free(worked_pool, worked_weights, worked_list):
    shuffled = RetrievedList("q1", list(reversed(worked_list.ranking)))
    assert observed_gain(worked_pool, worked_weights, shuffled, 5) == pytest.approx(
        observed_gain(worked_pool, worked_weights, worked_list, 5), abs=TOL
    )


def test_unknown_doc_scores_zero(worked_pool, worked_weights):
    lst = RetrievedList("q1", ["d00", "nope-1", "nope-2"])
    assert abs(observed_gain(worked_pool, worked_weights, lst, 3) - 1.0) < TOL


def test_ideal_gain_worked_example(worked_pool, worked_weights):
    # 2x w5 + 3x w4 = 1 + 1 + 0.75 = 2.75
    assert abs(ideal_gain(worked_pool, worked_weights, 5) - 2.75) < TOL


def test_ideal_gain_k_beyond_pool():
    pool = make_pool("q", [5, 4, 3])
    w = compute_weights(pool)
    total = sum(w.for_grade(p.grade) for p in pool.passages)
    assert abs(ideal_gain(pool, w, 10) - total) < TOL


def test_ideal_gain_low_grade_pool_is_zero():
    pool = make_pool("q", [2, 1, 2, 1])
    w = compute_weights(pool)  # fallback, but w2 = w1 = 0
    assert ideal_gain(pool, w, 10) == 0.0


def test_ra_nwg_worked_ratio(worked_pool, worked_weights, worked_list):
    value = ra_nwg_at_k(worked_pool, worked_weights, worked_list, 5)
    assert value == pytest.approx(1.55 / 2.75, abs=TOL)


def test_ra_nwg_oracle_set_is_one(worked_pool, worked_weights):
    oracle = RetrievedList("q1", ["d01", "d00", "d04", "d02", "d03"])  # permuted best-5
    assert ra_nwg_at_k(worked_pool, worked_weights, oracle, 5) == pytest.approx(1.0, abs=TOL)


def test_ra_nwg_na_when_no_weighted_evidence():
    pool = make_pool("q", [2, 2, 1])
    w = compute_weights(pool)
    lst = RetrievedList("q", ["d00"])
    assert ra_nwg_at_k(pool, w, lst, 5) is None


def test_n_recall_counting():
    pool = make_pool("q", [5, 4, 4, 4, 4, 4] + [2] * 6)  # R4+ = 6
    lst = RetrievedList("q", ["d00", "d01", "d02", "d06", "d07"])  # 3 hits in top-5
    assert n_recall_at_k(pool, lst, 5, 4) == pytest.approx(0.6, abs=TOL)


def test_n_recall_small_pool_not_penalized():
    pool = make_pool("q", [5, 5] + [1] * 8)  # R = 2 < K = 10
    lst = RetrievedList("q", ["d00", "d01", "d02"])
    assert n_recall_at_k(pool, lst, 10, 4) == pytest.approx(1.0, abs=TOL)


def test_n_recall_na_without_qualifying_docs():
    pool = make_pool("q", [3, 2, 1])
    lst = RetrievedList("q", ["d00"])
    assert n_recall_at_k(pool, lst, 5, 4) is None


def test_precision_counts_against_k(worked_pool):
    lst = RetrievedList("q1", ["d00", "d02", "d03", "d06", "d10"])  # 3 of 5 at grade >= 4
    assert precision4plus_at_k(worked_pool, lst, 5) == pytest.approx(0.6, abs=TOL)
    short = RetrievedList("q1", ["d00"])  # short list still divides by K
    assert precision4plus_at_k(worked_pool, short, 5) == pytest.approx(0.2, abs=TOL)
    all5 = RetrievedList("q1", ["d00", "d01"])
    assert precision4plus_at_k(worked_pool, all5, 2) == pytest.approx(1.0, abs=TOL)


def test_harm_worked_example(worked_pool, worked_list):
    assert harm_at_k(worked_pool, worked_list, 5) == pytest.approx(0.2, abs=TOL)


def test_harm_extremes():
    pool = make_pool("q", [5, 5, 1, 1])
    top = RetrievedList("q", ["d00", "d01"])
    bottom = RetrievedList("q", ["d02", "d03"])
    assert harm_at_k(pool, top, 2) == 0.0
    assert harm_at_k(pool, bottom, 2) == 1.0


def test_harm_counts_unknown_docs(worked_pool):
    lst = RetrievedList("q1", ["d00", "mystery"])
    assert harm_at_k(worked_pool, lst, 2) == pytest.approx(0.5, abs=TOL)


def _facet_pool() -> GradedPool:
    return GradedPool(
        "q",
        [
            GradedPassage("a", 5, facet_key="src1"),
            GradedPassage("b", 5, facet_key="src1"),
            GradedPassage("c", 5, facet_key="src2"),
            GradedPassage("d", 4),
        ],
    )


def test_novelty_collapses_duplicates_at_beta_zero():
    pool = _facet_pool()
    w = compute_weights(pool)
    lst = RetrievedList("q", ["a", "b"])
    assert abs(novelty_observed_gain(pool, w, lst, 2, beta=0.0) - 1.0) < TOL


def test_novelty_half_discount():
    pool = _facet_pool()
    w = compute_weights(pool)
    lst = RetrievedList("q", ["a", "b"])
    assert abs(novelty_observed_gain(pool, w, lst, 2, beta=0.5) - 1.5) < TOL


def test_novelty_distinct_facets_equals_observed():
    pool = _facet_pool()
    w = compute_weights(pool)
    lst = RetrievedList("q", ["a", "c", "d"])
    assert novelty_observed_gain(pool, w, lst, 3, beta=0.0) == pytest.approx(
        observed_gain(pool, w, lst, 3), abs=TOL
    )


def test_novelty_rejects_bad_beta():
    pool = _facet_pool()
    w = compute_weights(pool)
    lst = RetrievedList("q", ["a"])
    with pytest.raises(ValueError):
        novelty_observed_gain(pool, w, lst, 1, beta=1.0)


def test_hit_at_k_cases():
    lst = RetrievedList("q", ["a", "b", "c", "d"])
    assert hit_at_k(AnswerRecord("q", {"a", "b"}), lst, 3) is True
    assert hit_at_k(AnswerRecord("q", {"a", "x"}), lst, 3) is False
    assert hit_at_k(AnswerRecord("q", {"a", "d"}), lst, 3) is False  # d beyond K
    assert hit_at_k(AnswerRecord("q", set()), lst, 3) is None


def test_acc_given_hit_counts():
    lists = {
        "q1": RetrievedList("q1", ["a", "b"]),
        "q2": RetrievedList("q2", ["a", "b"]),
        "q3": RetrievedList("q3", ["a", "b"]),
        "q4": RetrievedList("q4", ["x"]),
    }
    answers = [
        AnswerRecord("q1", {"a"}, True),
        AnswerRecord("q2", {"a", "b"}, True),
        AnswerRecord("q3", {"b"}, False),
        AnswerRecord("q4", {"a"}, None),  # not a hit; label may be absent
    ]
    assert acc_given_hit(answers, lists, 2) == pytest.approx(2 / 3, abs=TOL)


def test_acc_given_hit_na_without_hits():
    lists = {"q1": RetrievedList("q1", ["x"])}
    answers = [AnswerRecord("q1", {"a"}, None)]
    assert acc_given_hit(answers, lists, 1) is None


def test_acc_given_hit_requires_labels_on_hits():
    lists = {"q1": RetrievedList("q1", ["a"])}
    answers = [AnswerRecord("q1", {"a"}, None)]
    with pytest.raises(ValueError):
        acc_given_hit(answers, lists, 1)


def test_macro_aggregate_mixed_na():
    rows = [
        QueryMetricRow("q1", "ra_nwg", 10, 0.5),
        QueryMetricRow("q2", "ra_nwg", 10, None),
        QueryMetricRow("q3", "ra_nwg", 10, 1.0),
    ]
    summary = macro_aggregate(rows)[("ra_nwg", 10)]
    assert summary.mean == pytest.approx(0.75, abs=TOL)
    assert summary.valid_count == 2


def test_macro_aggregate_all_na_and_single():
    rows = [
        QueryMetricRow("q1", "n_recall_5", 10, None),
        QueryMetricRow("q2", "n_recall_5", 10, None),
        QueryMetricRow("q1", "harm", 10, 0.3),
    ]
    summary = macro_aggregate(rows)
    assert summary[("n_recall_5", 10)].mean is None
    assert summary[("n_recall_5", 10)].valid_count == 0
    assert summary[("harm", 10)].mean == pytest.approx(0.3)
    assert summary[("harm", 10)].valid_count == 1


def test_score_query_emits_all_metrics(worked_pool, worked_list):
    rows = score_query(worked_pool, worked_list, [5, 10])
    assert len(rows) == 10
    assert {(r.metric, r.k) for r in rows} == {
        (m, k) for m in ("ra_nwg", "n_recall_4plus", "n_recall_5", "precision_4plus", "harm")
        for k in (5, 10)
    }


def test_k_must_be_positive(worked_pool, worked_weights, worked_list):
    with pytest.raises(ValueError):
        observed_gain(worked_pool, worked_weights, worked_list, 0)
