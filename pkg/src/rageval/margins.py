"""Cosine margins over embedded probe bundles.

For one query Q and its five candidates:

    name margin  = s(Q, C1) - max(s(Q, C2a), s(Q, C2b))
    topic margin = s(Q, C1) - s(Q, C3)
    both margin  = s(Q, C1) - s(Q, C4)

and an ablation run is summarized against its base run as the per-query
percent change of the name margin, excluding queries whose base margin
is too small for a percentage to be meaningful (those still appear in
the absolute-delta table).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from rageval.probes import CANDIDATE_KEYS, ProbeBundle

_UNIT_TOL = 1e-6


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """dot(u, v) / (|u| |v|); rejects zero-norm or mismatched vectors."""
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine is undefined for zero-norm vectors")
    return float(np.dot(a, b) / (na * nb))


def text_hash(text: str) -> str:
    """Stable key for caching embeddings of a given text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class EmbeddedBundle:
    """Unit vectors for the query and each candidate of one bundle."""

    query_id: str
    query_vector: np.ndarray
    candidate_vectors: dict[str, np.ndarray]
    provider_label: str = ""

    def __post_init__(self) -> None:
        missing = [k for k in CANDIDATE_KEYS if k not in self.candidate_vectors]
        if missing:
            raise ValueError(f"embedded bundle missing candidates: {missing}")
        vectors = [self.query_vector] + [self.candidate_vectors[k] for k in CANDIDATE_KEYS]
        dim = len(vectors[0])
        for vec in vectors:
            if len(vec) != dim:
                raise ValueError("all vectors in a bundle must share one dimension")
            norm = float(np.linalg.norm(vec))
            if abs(norm - 1.0) > _UNIT_TOL:
                raise ValueError(f"vectors must be unit length, got norm {norm}")


@dataclass
class MarginTriple:
    delta_name: float
    delta_topic: float
    delta_both: float


def margins(embedded: EmbeddedBundle) -> MarginTriple:
    """The three similarity gaps for one embedded bundle."""
    sims = {
        key: cosine(embedded.query_vector, vec)
        for key, vec in embedded.candidate_vectors.items()
    }
    return MarginTriple(
        delta_name=sims["C1"] - max(sims["C2a"], sims["C2b"]),
        delta_topic=sims["C1"] - sims["C3"],
        delta_both=sims["C1"] - sims["C4"],
    )


@dataclass
class DeltaDeltaSummary:
    """Ablation-vs-base summary of the name margin across queries."""

    mean_percent: float | None
    percent_by_query: dict[str, float]
    absolute_by_query: dict[str, float]
    excluded_queries: list[str]


def delta_delta_percent(
    base: Mapping[str, MarginTriple],
    ablated: Mapping[str, MarginTriple],
    exclusion_floor: float = 0.02,
) -> DeltaDeltaSummary:
    """Percent change of the name margin, ablation vs base, per query.

    Queries with base name margin below the exclusion floor are left out
    of the percent summary (tiny denominators make percentages
    unstable) but keep their absolute deltas. Both runs must cover the
    same query set.
    """
    if set(base) != set(ablated):
        raise ValueError(
            "base and ablated runs must cover the same queries; "
            f"only-base={sorted(set(base) - set(ablated))} "
            f"only-ablated={sorted(set(ablated) - set(base))}"
        )
    percent: dict[str, float] = {}
    absolute: dict[str, float] = {}
    excluded: list[str] = []
    for query_id in sorted(base):
        b = base[query_id].delta_name
        a = ablated[query_id].delta_name
        absolute[query_id] = a - b
        if b < exclusion_floor:
            excluded.append(query_id)
            continue
        percent[query_id] = (a - b) / b * 100.0
    mean = sum(percent.values()) / len(percent) if percent else None
    return DeltaDeltaSummary(
        mean_percent=mean,
        percent_by_query=percent,
        absolute_by_query=absolute,
        excluded_queries=excluded,
    )


class MissingVectorError(KeyError):
    """A text has no recorded vector under the requested provider."""


@dataclass
class RecordedVectorProvider:
    """Embeds by replaying recorded vectors keyed by text hash.

    This keeps all margin math verifiable offline; live providers plug
    in behind the same embed() shape in integration mode.
    """

    vectors: Mapping[str, np.ndarray]
    provider_label: str = "recorded"

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        missing: list[str] = []
        for text in texts:
            key = text_hash(text)
            if key in self.vectors:
                out.append(np.asarray(self.vectors[key], dtype=float))
            else:
                missing.append(key)
        if missing:
            raise MissingVectorError(
                f"no recorded vectors for {len(missing)} text(s); "
                f"first missing hashes: {missing[:3]}"
            )
        return out


@dataclass
class HttpEmbeddingProvider:
    """Remote provider: POSTs {"texts": [...]} and expects {"vectors": [[...]]}.

    Integration-mode only; offline runs use RecordedVectorProvider.
    """

    url: str
    provider_label: str = "remote"
    timeout: float = 30.0

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        from rageval.judges import _post_json

        response = _post_json(self.url, {"texts": list(texts)}, self.timeout)
        vectors = [np.asarray(v, dtype=float) for v in response["vectors"]]
        if len(vectors) != len(texts):
            raise ValueError(
                f"provider returned {len(vectors)} vectors for {len(texts)} texts"
            )
        return vectors


def embed_bundle(
    bundle: ProbeBundle,
    provider: "RecordedVectorProvider | HttpEmbeddingProvider",
    query_id: str = "",
) -> EmbeddedBundle:
    """Embed the query and all five candidates through one provider."""
    texts = [bundle.query_text] + [bundle.candidates[k].text for k in CANDIDATE_KEYS]
    vectors = provider.embed(texts)
    return EmbeddedBundle(
        query_id=query_id,
        query_vector=vectors[0],
        candidate_vectors=dict(zip(CANDIDATE_KEYS, vectors[1:])),
        provider_label=provider.provider_label,
    )
