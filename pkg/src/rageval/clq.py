"""Cost, latency, and quality analysis over evaluated configurations.

Costs are exact decimals (token-metered pricing reproduces bit-exactly),
latency percentiles use the nearest-rank definition for cross-platform
reproducibility, and configurations are compared three ways: a single
efficiency scalar for quick shortlisting, a Pareto frontier over
(cost, latency, quality...), and SLO-conditioned selection rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Mapping, Sequence

from rageval.metrics import N_RECALL_4PLUS, RA_NWG, quality_key

# Four headline metrics averaged into the efficiency scalar.
HEADLINE_KEYS = (
    quality_key(N_RECALL_4PLUS, 10),
    quality_key(RA_NWG, 10),
    quality_key(N_RECALL_4PLUS, 30),
    quality_key(RA_NWG, 30),
)

# Latency deltas below this are treated as jitter in reports (never in math).
JITTER_WINDOW_MS = 75.0


def as_money(value: Decimal | int | str | float) -> Decimal:
    """Coerce a price or cost to Decimal; floats go through repr, which is exact."""
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        return Decimal(repr(value))
    return Decimal(value)


@dataclass
class PriceSheet:
    """Per-tier prices: rerankers per 1K tokens, generators per 1M input tokens."""

    rerank_per_1k: dict[str, Decimal]
    generator_input_per_1m: dict[str, Decimal]

    def __post_init__(self) -> None:
        self.rerank_per_1k = {k: as_money(v) for k, v in self.rerank_per_1k.items()}
        self.generator_input_per_1m = {
            k: as_money(v) for k, v in self.generator_input_per_1m.items()
        }
        for name, price in {**self.rerank_per_1k, **self.generator_input_per_1m}.items():
            if price < 0:
                raise ValueError(f"price for {name!r} must be >= 0, got {price}")

    @classmethod
    def default(cls) -> "PriceSheet":
        # Published per-token prices, Nov 2025.
        return cls(
            rerank_per_1k={
                "rerank-2.5": Decimal("0.00005"),
                "rerank-2.5-lite": Decimal("0.00002"),
            },
            generator_input_per_1m={
                "gpt-5": Decimal("1.25"),
                "gpt-5-mini": Decimal("0.25"),
                "gpt-5-nano": Decimal("0.05"),
            },
        )


def rerank_cost(
    k: int,
    tokens_per_candidate: int | Decimal,
    price_per_1k: Decimal | str | float,
    queries: int = 1000,
) -> Decimal:
    """Reranker spend: K x (tokens/1000) x price per 1K tokens x queries."""
    if k < 0 or queries < 0:
        raise ValueError("k and queries must be >= 0")
    tokens = as_money(tokens_per_candidate)
    if tokens < 0:
        raise ValueError(f"tokens_per_candidate must be >= 0, got {tokens}")
    return Decimal(k) * tokens / Decimal(1000) * as_money(price_per_1k) * Decimal(queries)


def generator_input_cost(
    k: int,
    tokens_per_chunk: int | Decimal,
    price_per_1m_input: Decimal | str | float,
    queries: int = 1000,
) -> Decimal:
    """Generator input spend: K x tokens x queries x price per 1M input tokens."""
    if k < 0 or queries < 0:
        raise ValueError("k and queries must be >= 0")
    tokens = as_money(tokens_per_chunk)
    if tokens < 0:
        raise ValueError(f"tokens_per_chunk must be >= 0, got {tokens}")
    return (
        Decimal(k) * tokens * Decimal(queries) * as_money(price_per_1m_input)
        / Decimal(1_000_000)
    )


def percentile(samples: Sequence[float], q: float) -> float:
    """Nearest-rank percentile: the ceil(q*n)-th order statistic."""
    if not samples:
        raise ValueError("percentile of an empty sample list is undefined")
    if not 0 < q < 1:
        raise ValueError(f"q must be in (0, 1), got {q}")
    ordered = sorted(samples)
    rank = math.ceil(q * len(ordered))
    return ordered[rank - 1]


def average_performance(quality: Mapping[str, float]) -> float:
    """Mean of the four headline metrics; all must be present."""
    missing = [key for key in HEADLINE_KEYS if key not in quality]
    if missing:
        raise ValueError(f"quality map is missing headline metrics: {missing}")
    return sum(quality[key] for key in HEADLINE_KEYS) / len(HEADLINE_KEYS)


def efficiency(avg_performance: float, latency_ms: float) -> float:
    """Average performance divided by latency in seconds (screening scalar only)."""
    if latency_ms <= 0:
        raise ValueError(f"latency_ms must be > 0, got {latency_ms}")
    return avg_performance / (latency_ms / 1000.0)


@dataclass
class ConfigPoint:
    """One evaluated configuration: cost, latency percentiles, quality map."""

    config_id: str
    cost_per_1k_queries: Decimal
    latency_p50: float | None = None
    latency_p95: float | None = None
    latency_samples: list[float] | None = None
    quality: dict[str, float] = field(default_factory=dict)
    k: int | None = None

    def __post_init__(self) -> None:
        self.cost_per_1k_queries = as_money(self.cost_per_1k_queries)
        if self.latency_p50 is None:
            if not self.latency_samples:
                raise ValueError(
                    f"config {self.config_id!r} needs latency_p50 or latency_samples"
                )
            self.latency_p50 = percentile(self.latency_samples, 0.50)
            if self.latency_p95 is None:
                self.latency_p95 = percentile(self.latency_samples, 0.95)
        for key, value in self.quality.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(
                    f"quality {key!r} of config {self.config_id!r} must be in [0,1], got {value}"
                )

    def efficiency(self) -> float:
        return efficiency(average_performance(self.quality), self.latency_p50)


DEFAULT_QUALITY_OBJECTIVES = (quality_key(RA_NWG, 10), quality_key(RA_NWG, 30))


def _dominates(a: ConfigPoint, b: ConfigPoint, quality_metrics: Sequence[str]) -> bool:
    """a dominates b: no worse on cost/latency/every quality, strictly better somewhere."""
    if a.cost_per_1k_queries > b.cost_per_1k_queries or a.latency_p50 > b.latency_p50:
        return False
    for metric in quality_metrics:
        if a.quality[metric] < b.quality[metric]:
            return False
    if a.cost_per_1k_queries < b.cost_per_1k_queries or a.latency_p50 < b.latency_p50:
        return True
    return any(a.quality[m] > b.quality[m] for m in quality_metrics)


def pareto_frontier(
    points: Sequence[ConfigPoint],
    quality_metrics: Sequence[str] = DEFAULT_QUALITY_OBJECTIVES,
) -> list[ConfigPoint]:
    """Non-dominated subset under (min cost, min p50 latency, max qualities).

    Deterministic output order by config_id. Duplicated points are both
    retained (neither strictly beats the other).
    """
    if not points:
        raise ValueError("pareto_frontier needs at least one point")
    for point in points:
        missing = [m for m in quality_metrics if m not in point.quality]
        if missing:
            raise ValueError(
                f"config {point.config_id!r} is missing quality metrics {missing}"
            )
    frontier = [
        p
        for p in points
        if not any(_dominates(other, p, quality_metrics) for other in points if other is not p)
    ]
    return sorted(frontier, key=lambda p: p.config_id)


@dataclass
class SloConstraints:
    """At least one of the three bounds must be set."""

    max_latency_ms: float | None = None
    max_cost: Decimal | None = None
    min_quality: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if self.max_cost is not None:
            self.max_cost = as_money(self.max_cost)
        if (
            self.max_latency_ms is None
            and self.max_cost is None
            and not self.min_quality
        ):
            raise ValueError("SLO constraints need at least one bound")


SELECTION_RULES = ("latency_bound", "cost_bound", "quality_targeted")


@dataclass
class SloShortlist:
    entries: list[ConfigPoint]
    diagnostic: str | None = None


def _k_or_inf(point: ConfigPoint) -> float:
    return point.k if point.k is not None else math.inf


def select_under_slo(
    points: Sequence[ConfigPoint],
    slo: SloConstraints,
    rule: str,
    quality_metric: str = quality_key(RA_NWG, 10),
) -> SloShortlist:
    """Filter by the rule's bound and rank by its objective.

    latency/cost bounds rank by quality descending; quality targets rank
    by latency then cost ascending. Everything tie-breaks toward smaller
    K (smaller prompts cost less downstream). An empty feasible set is a
    diagnostic, not an error.
    """
    if rule not in SELECTION_RULES:
        raise ValueError(f"rule must be one of {SELECTION_RULES}, got {rule!r}")
    if rule == "latency_bound":
        if slo.max_latency_ms is None:
            raise ValueError("latency_bound rule needs max_latency_ms")
        feasible = [p for p in points if p.latency_p50 <= slo.max_latency_ms]
        reason = f"p50 <= {slo.max_latency_ms} ms"
    elif rule == "cost_bound":
        if slo.max_cost is None:
            raise ValueError("cost_bound rule needs max_cost")
        feasible = [p for p in points if p.cost_per_1k_queries <= slo.max_cost]
        reason = f"cost <= {slo.max_cost}"
    else:
        if not slo.min_quality:
            raise ValueError("quality_targeted rule needs min_quality")
        feasible = [
            p
            for p in points
            if all(p.quality.get(m, -1.0) >= thr for m, thr in slo.min_quality.items())
        ]
        reason = "quality >= " + ", ".join(
            f"{m}:{thr}" for m, thr in sorted(slo.min_quality.items())
        )
    if not feasible:
        return SloShortlist(entries=[], diagnostic=f"no configuration satisfies {reason}")
    if rule == "quality_targeted":
        ordered = sorted(
            feasible,
            key=lambda p: (p.latency_p50, p.cost_per_1k_queries, _k_or_inf(p), p.config_id),
        )
    else:
        for p in feasible:
            if quality_metric not in p.quality:
                raise ValueError(
                    f"config {p.config_id!r} is missing quality metric {quality_metric!r}"
                )
        ordered = sorted(
            feasible,
            key=lambda p: (-p.quality[quality_metric], _k_or_inf(p), p.config_id),
        )
    return SloShortlist(entries=ordered, diagnostic=None)


@dataclass
class MarginalGain:
    k_from: int
    k_to: int
    delta_quality: float
    delta_ms: float
    gain_per_ms: float  # math.inf marks a zero-latency-delta step


def marginal_gain(
    points: Sequence[ConfigPoint],
    quality_metric: str = quality_key(RA_NWG, 30),
) -> list[MarginalGain]:
    """Quality gained per extra millisecond when stepping up K in one family."""
    if len(points) < 2:
        raise ValueError("marginal_gain needs at least two points")
    ks = [p.k for p in points]
    if any(k is None for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise ValueError(f"points must have strictly increasing K, got {ks}")
    out: list[MarginalGain] = []
    for prev, nxt in zip(points, points[1:]):
        dq = nxt.quality[quality_metric] - prev.quality[quality_metric]
        dms = nxt.latency_p50 - prev.latency_p50
        out.append(
            MarginalGain(
                k_from=prev.k,
                k_to=nxt.k,
                delta_quality=dq,
                delta_ms=dms,
                gain_per_ms=math.inf if dms == 0 else dq / dms,
            )
        )
    return out


@dataclass
class RoutingSignals:
    """Per-query uncertainty signals that justify escalating K."""

    dense_margin: float
    reranker_entropy: float
    diagnostic_flag: bool = False

    def __post_init__(self) -> None:
        if not math.isfinite(self.dense_margin):
            raise ValueError("dense_margin must be finite")
        if self.reranker_entropy < 0:
            raise ValueError(f"reranker_entropy must be >= 0, got {self.reranker_entropy}")


@dataclass
class RoutingThresholds:
    """Escalation thresholds; the defaults are placeholders to be tuned per corpus."""

    margin_threshold: float = 0.02
    entropy_threshold: float = 0.9 * math.log(50)
    base_k: int = 50
    escalated_k: int = 100

    @classmethod
    def for_candidates(cls, n_candidates: int, **kwargs) -> "RoutingThresholds":
        if n_candidates < 2:
            raise ValueError("entropy threshold needs at least 2 candidates")
        return cls(entropy_threshold=0.9 * math.log(n_candidates), **kwargs)


def dynamic_k_route(signals: RoutingSignals, thresholds: RoutingThresholds) -> int:
    """Escalate K when any uncertainty signal fires, else stay at the base K."""
    if (
        signals.dense_margin < thresholds.margin_threshold
        or signals.reranker_entropy > thresholds.entropy_threshold
        or signals.diagnostic_flag
    ):
        return thresholds.escalated_k
    return thresholds.base_k


def score_entropy(scores: Sequence[float]) -> float:
    """Shannon entropy of sum-normalized non-negative scores (nats)."""
    if any(s < 0 for s in scores):
        raise ValueError("score_entropy needs non-negative scores")
    total = sum(scores)
    if total <= 0:
        raise ValueError("score_entropy needs a positive score mass")
    probs = [s / total for s in scores if s > 0]
    return -sum(p * math.log(p) for p in probs)


def jitter_flags(points: Sequence[ConfigPoint], window_ms: float = JITTER_WINDOW_MS) -> dict[str, bool]:
    """Flag configs whose p50 sits within the jitter window of the fastest.

    Annotation for reports only; never feeds back into any computation.
    """
    if not points:
        return {}
    fastest = min(p.latency_p50 for p in points)
    return {
        p.config_id: bool(0 < p.latency_p50 - fastest < window_ms) for p in points
    }
