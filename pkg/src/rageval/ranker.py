"""Confidence-aware listwise refinement with pairwise locks.

Items carry a score s_i and an accumulated information value I_i. Each
iteration samples a small batch (favoring low exposure / low info),
asks a judge for a total order, and applies a stage-wise softmax update
over the order's suffixes:

    p_j = exp(s_j) / sum_{u in suffix} exp(s_u)
    ds[winner] += eta * (1 - p_winner)
    ds[j]      -= eta * p_j            (j != winner)
    I[j]       += p_j * (1 - p_j)

Accumulated deltas are clipped to +/-clip per item, eta optionally
decays as 1/sqrt(t), and scores are recentered to mean zero
periodically (which preserves every pairwise difference).

Pairwise preferences become locks once statistically clear: with
sigma_i = 1/sqrt(max(I_i, eps)), lock w over l when

    s_w - z*sigma_w > s_l + z*sigma_l

or after enough independent confirmations, or when the pair is already
implied by the transitive closure of existing locks. Lock requests that
would create a cycle are rejected (and counted), so the lock graph
stays acyclic. The global order is a topological sort of that graph
with ties broken by score, and refinement stops once the tracked head
is unchanged for a configured number of consecutive iterations.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from rageval.metrics import WeightSchedule
from rageval.pools import GradedPool

ETA_DECAY_MODES = ("none", "inverse_sqrt")


@dataclass
class RankerConfig:
    batch_size: int = 5
    eta: float = 0.1
    clip: float = 0.5
    z: float = 2.0
    eps: float = 1e-6
    min_confirmations: int = 3
    stability_t: int = 3
    iteration_limit: int = 500
    eta_decay: str = "none"
    recenter_every: int = 10
    top_n: int = 20

    def __post_init__(self) -> None:
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        for name in ("eta", "clip", "z", "eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.stability_t < 1:
            raise ValueError(f"stability_t must be >= 1, got {self.stability_t}")
        if self.iteration_limit < 0:
            raise ValueError(f"iteration_limit must be >= 0, got {self.iteration_limit}")
        if self.eta_decay not in ETA_DECAY_MODES:
            raise ValueError(f"eta_decay must be one of {ETA_DECAY_MODES}")
        if self.recenter_every < 1:
            raise ValueError(f"recenter_every must be >= 1, got {self.recenter_every}")
        if self.min_confirmations < 1:
            raise ValueError(
                f"min_confirmations must be >= 1, got {self.min_confirmations}"
            )
        if self.top_n < 1:
            raise ValueError(f"top_n must be >= 1, got {self.top_n}")


@dataclass
class JudgedOrder:
    """A judge's total order over one batch (a permutation of it)."""

    batch: list[str]
    order: list[str]

    def __post_init__(self) -> None:
        if sorted(self.batch) != sorted(self.order) or len(set(self.batch)) != len(
            self.batch
        ):
            raise ValueError("order must be a permutation of a duplicate-free batch")


@dataclass
class RankerState:
    """Mutable per-query refinement state; one instance per query."""

    items: list[str]
    scores: dict[str, float]
    info: dict[str, float]
    exposures: dict[str, int]
    successors: dict[str, set[str]] = field(default_factory=dict)
    pending: dict[tuple[str, str], int] = field(default_factory=dict)
    iteration: int = 0
    lock_count: int = 0
    rejected_locks: int = 0
    snapshots: deque = field(default_factory=deque)

    def locked(self, winner: str, loser: str) -> bool:
        return loser in self.successors.get(winner, ())

    def reaches(self, src: str, dst: str) -> bool:
        """True when a directed lock path src -> ... -> dst exists."""
        if src == dst:
            return True
        stack = [src]
        seen = {src}
        while stack:
            node = stack.pop()
            for nxt in self.successors.get(node, ()):
                if nxt == dst:
                    return True
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return False

    def assert_acyclic(self) -> None:
        """Kahn's check over the lock graph; raises on any cycle."""
        indegree = {item: 0 for item in self.items}
        for src, dsts in self.successors.items():
            for dst in dsts:
                indegree[dst] += 1
        queue = [item for item, deg in indegree.items() if deg == 0]
        visited = 0
        while queue:
            node = queue.pop()
            visited += 1
            for nxt in self.successors.get(node, ()):
                indegree[nxt] -= 1
                if indegree[nxt] == 0:
                    queue.append(nxt)
        if visited != len(self.items):
            raise RuntimeError("lock graph contains a cycle; internal invariant broken")


def init_state(
    pool: GradedPool, weights: WeightSchedule, config: RankerConfig
) -> RankerState:
    """Seed scores from grade weights (recentered to mean zero).

    Items are held in doc_id order so downstream sampling and ordering
    are independent of pool input order.
    """
    items = sorted(p.doc_id for p in pool.passages)
    grades = {p.doc_id: p.grade for p in pool.passages}
    raw = {item: weights.for_grade(grades[item]) for item in items}
    mean = sum(raw.values()) / len(raw)
    state = RankerState(
        items=items,
        scores={item: raw[item] - mean for item in items},
        info={item: config.eps for item in items},
        exposures={item: 0 for item in items},
    )
    state.snapshots = deque(maxlen=config.stability_t)
    return state


def sample_batch(
    state: RankerState, config: RankerConfig, rng: np.random.Generator
) -> list[str]:
    """Draw a batch of distinct items, favoring low exposures and low info.

    Sampling weight is 1/(1+exposures) * 1/sqrt(I); with fewer items
    than the batch size, the whole roster is returned.
    """
    if len(state.items) <= config.batch_size:
        return list(state.items)
    weights = np.array(
        [
            1.0 / (1.0 + state.exposures[item]) / np.sqrt(state.info[item])
            for item in state.items
        ]
    )
    probs = weights / weights.sum()
    picked = rng.choice(len(state.items), size=config.batch_size, replace=False, p=probs)
    return [state.items[i] for i in picked]


def listwise_update(
    state: RankerState, judged: JudgedOrder, config: RankerConfig
) -> dict[str, float]:
    """Apply one iteration's suffix-softmax update; returns the applied deltas.

    Softmax probabilities are computed from the scores as they stood at
    the start of the iteration. The size-1 suffix is skipped (its update
    and information contribution are identically zero). Increments the
    iteration counter and performs the periodic recentering.
    """
    unknown = [item for item in judged.batch if item not in state.scores]
    if unknown:
        raise ValueError(f"judged batch contains unknown items: {unknown}")
    state.iteration += 1
    start_scores = dict(state.scores)
    deltas = {item: 0.0 for item in judged.order}
    m = len(judged.order)
    for k in range(m - 1):
        suffix = judged.order[k:]
        winner = suffix[0]
        exps = np.exp(
            np.array([start_scores[j] for j in suffix])
            - max(start_scores[j] for j in suffix)
        )
        probs = exps / exps.sum()
        for j, p in zip(suffix, probs):
            p = float(p)
            if j == winner:
                deltas[j] += config.eta * (1.0 - p)
            else:
                deltas[j] -= config.eta * p
            state.info[j] += p * (1.0 - p)
    decay = 1.0 if config.eta_decay == "none" else 1.0 / np.sqrt(state.iteration)
    applied: dict[str, float] = {}
    for item, delta in deltas.items():
        clipped = max(-config.clip, min(config.clip, delta)) * decay
        state.scores[item] += clipped
        applied[item] = clipped
    for item in judged.batch:
        state.exposures[item] += 1
    if state.iteration % config.recenter_every == 0:
        mean = sum(state.scores.values()) / len(state.scores)
        for item in state.scores:
            state.scores[item] -= mean
    return applied


def _sigma(state: RankerState, item: str, config: RankerConfig) -> float:
    return 1.0 / np.sqrt(max(state.info[item], config.eps))


def try_lock(
    state: RankerState, judged: JudgedOrder, config: RankerConfig
) -> set[tuple[str, str]]:
    """Commit pairwise preferences implied by the judged order when clear.

    A pair locks when the winner's lower confidence bound beats the
    loser's upper bound, when it has been confirmed often enough, or
    when the existing lock closure already implies it. Cycle-inducing
    requests are rejected and counted; pendings already decided by the
    closure are discarded.
    """
    new_locks: set[tuple[str, str]] = set()
    order = judged.order
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            winner, loser = order[i], order[j]
            if state.locked(winner, loser):
                continue
            if state.reaches(winner, loser):
                should_lock = True  # implied transitively: lock without confirmations
            else:
                lcb = state.scores[winner] - config.z * _sigma(state, winner, config)
                ucb = state.scores[loser] + config.z * _sigma(state, loser, config)
                if lcb > ucb:
                    should_lock = True
                else:
                    count = state.pending.get((winner, loser), 0) + 1
                    state.pending[(winner, loser)] = count
                    should_lock = count >= config.min_confirmations
            if not should_lock:
                continue
            if state.reaches(loser, winner):
                state.rejected_locks += 1
                continue
            state.successors.setdefault(winner, set()).add(loser)
            state.lock_count += 1
            new_locks.add((winner, loser))
            state.pending.pop((winner, loser), None)
    if new_locks:
        for pair in [
            p
            for p in state.pending
            if state.reaches(p[0], p[1]) or state.reaches(p[1], p[0])
        ]:
            del state.pending[pair]
    return new_locks


def global_order(state: RankerState) -> list[str]:
    """Topological order of the lock graph, highest score first among available."""
    indegree = {item: 0 for item in state.items}
    for src, dsts in state.successors.items():
        for dst in dsts:
            indegree[dst] += 1
    heap = [
        (-state.scores[item], item) for item, deg in indegree.items() if deg == 0
    ]
    heapq.heapify(heap)
    out: list[str] = []
    while heap:
        _, item = heapq.heappop(heap)
        out.append(item)
        for nxt in sorted(state.successors.get(item, ())):
            indegree[nxt] -= 1
            if indegree[nxt] == 0:
                heapq.heappush(heap, (-state.scores[nxt], nxt))
    if len(out) != len(state.items):
        raise RuntimeError("lock graph contains a cycle; internal invariant broken")
    return out


class JudgeFailure(RuntimeError):
    """A judge call failed twice; carries the partial state for persistence."""

    def __init__(self, message: str, state: RankerState):
        super().__init__(message)
        self.state = state


@dataclass
class RefineResult:
    top: list[str]
    scores: dict[str, float]
    lock_count: int
    rejected_locks: int
    iterations: int
    converged: bool


def refine(
    pool: GradedPool,
    weights: WeightSchedule,
    judge: Callable[[Sequence[str]], Sequence[str]],
    config: RankerConfig | None = None,
    rng: np.random.Generator | None = None,
    check_invariants: bool = False,
) -> RefineResult:
    """Run sample -> judge -> update -> lock -> order until the head is stable.

    Stops when the tracked top-N id sequence repeats for stability_t
    consecutive iterations, or at the iteration limit (converged=False).
    A failing judge call is retried once; a second failure raises
    JudgeFailure with the partial state attached.
    """
    config = config or RankerConfig()
    rng = rng or np.random.default_rng(0)
    state = init_state(pool, weights, config)
    converged = False
    while state.iteration < config.iteration_limit:
        batch = sample_batch(state, config, rng)
        try:
            ordered = list(judge(batch))
        except Exception:
            try:
                ordered = list(judge(batch))
            except Exception as exc:
                raise JudgeFailure(
                    f"judge failed twice at iteration {state.iteration + 1}: {exc}",
                    state,
                ) from exc
        judged = JudgedOrder(batch=list(batch), order=ordered)
        listwise_update(state, judged, config)
        try_lock(state, judged, config)
        if check_invariants:
            state.assert_acyclic()
        snapshot = tuple(global_order(state)[: config.top_n])
        state.snapshots.append(snapshot)
        if (
            len(state.snapshots) == config.stability_t
            and len(set(state.snapshots)) == 1
        ):
            converged = True
            break
    final = global_order(state)
    return RefineResult(
        top=final[: config.top_n],
        scores=dict(state.scores),
        lock_count=state.lock_count,
        rejected_locks=state.rejected_locks,
        iterations=state.iteration,
        converged=converged,
    )
