"""Rank-agreement and resampling statistics for paired runs."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


def overlap_at_k(list_a: Sequence[str], list_b: Sequence[str], k: int) -> float:
    """|top-K(a) intersect top-K(b)| / K."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return len(set(list_a[:k]) & set(list_b[:k])) / k


def kendall_tau(order_a: Sequence[str], order_b: Sequence[str]) -> float:
    """(concordant - discordant) / (n(n-1)/2) over the common items.

    No tie correction (probe orders are strict). Item-set mismatches are
    restricted to the intersection with a warning.
    """
    set_a, set_b = set(order_a), set(order_b)
    common = set_a & set_b
    if set_a != set_b:
        logger.warning(
            "kendall_tau item sets differ (%d vs %d items); using the %d common",
            len(set_a),
            len(set_b),
            len(common),
        )
    if len(common) < 2:
        raise ValueError("kendall_tau needs at least 2 common items")
    pos_a = {item: i for i, item in enumerate(order_a) if item in common}
    pos_b = {item: i for i, item in enumerate(order_b) if item in common}
    items = sorted(common)
    concordant = 0
    discordant = 0
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            x, y = items[i], items[j]
            a_sign = pos_a[x] - pos_a[y]
            b_sign = pos_b[x] - pos_b[y]
            if a_sign * b_sign > 0:
                concordant += 1
            else:
                discordant += 1
    n = len(items)
    return (concordant - discordant) / (n * (n - 1) / 2)


def bootstrap_ci(
    values: Sequence[float],
    confidence: float = 0.95,
    resamples: int = 10_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean, resampling with replacement."""
    if len(values) < 2:
        raise ValueError("bootstrap_ci needs at least 2 values")
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    data = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, len(data), size=(resamples, len(data)))
    means = data[idx].mean(axis=1)
    alpha = (1.0 - confidence) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    return float(low), float(high)
