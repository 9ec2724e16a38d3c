"""Cosine, margin triples, percent summaries, recorded-vector replay."""

from __future__ import annotations

import numpy as np
import pytest

from rageval.margins import (
    DeltaDeltaSummary,
    EmbeddedBundle,
    MarginTriple,
    MissingVectorError,
    RecordedVectorProvider,
    cosine,
    delta_delta_percent,
    embed_bundle,
    margins,
    text_hash,
)

TOL = 1e-9


def test_cosine_basics():
    assert cosine([1, 0], [1, 0]) == pytest.approx(1.0, abs=TOL)
    assert cosine([1, 0], [0, 1]) == pytest.approx(0.0, abs=TOL)
    assert cosine([1, 2], [-1, -2]) == pytest.approx(-1.0, abs=TOL)


def test_cosine_symmetry_and_scale_invariance():
    rng = np.random.default_rng(2)
    for _ in range(50):
        u = rng.normal(size=6)
        v = rng.normal(size=6)
        assert cosine(u, v) == pytest.approx(cosine(v, u), abs=TOL)
        assert cosine(3.7 * u, v) == pytest.approx(cosine(u, v), abs=TOL)
        assert -1 - TOL <= cosine(u, v) <= 1 + TOL


def test_cosine_rejects_bad_input():
    with pytest.raises(ValueError):
        cosine([1, 0], [1, 0, 0])
    with pytest.raises(ValueError):
        cosine([0, 0], [1, 0])


def unit_with_cos(target: float, axis: int, dim: int = 8) -> np.ndarray:
    vec = np.zeros(dim)
    vec[0] = target
    vec[axis] = np.sqrt(1.0 - target * target)
    return vec


def embedded(sims: dict[str, float]) -> EmbeddedBundle:
    query = np.zeros(8)
    query[0] = 1.0
    vectors = {
        key: unit_with_cos(sims[key], axis)
        for axis, key in enumerate(("C1", "C2a", "C2b", "C3", "C4"), start=1)
    }
    return EmbeddedBundle("q", query, vectors)


def test_margin_arithmetic():
    triple = margins(embedded({"C1": 0.9, "C2a": 0.7, "C2b": 0.75, "C3": 0.6, "C4": 0.5}))
    assert triple.delta_name == pytest.approx(0.15, abs=TOL)
    assert triple.delta_topic == pytest.approx(0.3, abs=TOL)
    assert triple.delta_both == pytest.approx(0.4, abs=TOL)


def test_margin_zero_when_c1_equals_c3():
    triple = margins(embedded({"C1": 0.8, "C2a": 0.7, "C2b": 0.6, "C3": 0.8, "C4": 0.5}))
    assert triple.delta_topic == pytest.approx(0.0, abs=TOL)


def test_embedded_bundle_validates_norms():
    query = np.zeros(8)
    query[0] = 2.0  # not unit
    vectors = {
        key: unit_with_cos(0.5, axis)
        for axis, key in enumerate(("C1", "C2a", "C2b", "C3", "C4"), start=1)
    }
    with pytest.raises(ValueError):
        EmbeddedBundle("q", query, vectors)


def triple(name: float, topic: float = 0.3, both: float = 0.4) -> MarginTriple:
    return MarginTriple(name, topic, both)


def test_delta_delta_basic_percentages():
    base = {"q1": triple(0.175)}
    ablated = {"q1": triple(0.0)}
    summary = delta_delta_percent(base, ablated)
    assert summary.mean_percent == pytest.approx(-100.0, abs=1e-9)
    assert summary.percent_by_query["q1"] == pytest.approx(-100.0)
    assert summary.absolute_by_query["q1"] == pytest.approx(-0.175)


def test_delta_delta_identity_is_zero():
    base = {"q1": triple(0.2), "q2": triple(0.1)}
    summary = delta_delta_percent(base, base)
    assert summary.mean_percent == pytest.approx(0.0, abs=TOL)


def test_delta_delta_floor_exclusion():
    base = {"q1": triple(0.2), "q2": triple(0.01)}
    ablated = {"q1": triple(0.1), "q2": triple(0.5)}
    summary = delta_delta_percent(base, ablated, exclusion_floor=0.02)
    assert summary.excluded_queries == ["q2"]
    assert "q2" not in summary.percent_by_query
    assert summary.absolute_by_query["q2"] == pytest.approx(0.49)
    assert summary.mean_percent == pytest.approx(-50.0, abs=1e-9)


def test_delta_delta_all_excluded_gives_none():
    base = {"q1": triple(0.001)}
    summary = delta_delta_percent(base, {"q1": triple(0.5)})
    assert summary.mean_percent is None
    assert isinstance(summary, DeltaDeltaSummary)


def test_delta_delta_query_set_mismatch():
    with pytest.raises(ValueError):
        delta_delta_percent({"q1": triple(0.2)}, {"q2": triple(0.2)})


def test_recorded_provider_replay_and_missing():
    texts = ["alpha text", "beta text"]
    store = {text_hash(t): unit_with_cos(0.5, 1) for t in texts}
    provider = RecordedVectorProvider(store, "fixture")
    out = provider.embed(texts)
    assert len(out) == 2
    with pytest.raises(MissingVectorError):
        provider.embed(["gamma text"])


def test_embed_bundle_end_to_end():
    from rageval.probes import build_bundle

    bundle = build_bundle(
        "Alice Dupont", "topic one", "Marie Lefevre", "Claire Moreau",
        "Paul Girard", "topic two", "EN",
    )
    sims = {"C1": 0.82, "C2a": 0.65, "C2b": 0.6, "C3": 0.5, "C4": 0.35}
    store = {text_hash(bundle.query_text): unit_with_cos(1.0, 1)}
    for axis, key in enumerate(("C1", "C2a", "C2b", "C3", "C4"), start=1):
        store[text_hash(bundle.candidates[key].text)] = unit_with_cos(sims[key], axis)
    provider = RecordedVectorProvider(store, "fixture")
    triple_out = margins(embed_bundle(bundle, provider, "q1"))
    assert triple_out.delta_name == pytest.approx(0.82 - 0.65, abs=TOL)
    assert triple_out.delta_topic == pytest.approx(0.82 - 0.5, abs=TOL)
    assert triple_out.delta_both == pytest.approx(0.82 - 0.35, abs=TOL)
