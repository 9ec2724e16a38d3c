"""Judges for the listwise ranker.

A judge is any callable mapping a batch of item ids to a total order
over them. Three implementations:

    SimulatedJudge   deterministic test double driven by hidden true
                     utilities plus optional Gumbel noise (noise drawn
                     from the same family as the ranking model, so the
                     convergence testbed is well-specified)
    TranscriptJudge  replays recorded orders for offline reproduction
    HttpJudge        thin adapter posting batches to a remote endpoint
"""

from __future__ import annotations

import json
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


@dataclass
class SimulatedJudge:
    """Orders batches by true utility plus seeded Gumbel noise.

    noise_scale=0 returns the exact true order; ties at equal utility
    break by item id. Draws are sequential from one seeded generator, so
    the whole judgment stream is deterministic per seed.
    """

    true_utilities: Mapping[str, float]
    noise_scale: float = 0.0
    seed: int = 0
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.noise_scale < 0:
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale}")
        self._rng = np.random.default_rng(self.seed)

    def __call__(self, batch: Sequence[str]) -> list[str]:
        utilities = np.array([self.true_utilities[item] for item in batch], dtype=float)
        if self.noise_scale > 0:
            utilities = utilities + self._rng.gumbel(0.0, self.noise_scale, len(batch))
        keyed = sorted(zip(batch, utilities), key=lambda t: (-t[1], t[0]))
        return [item for item, _ in keyed]


class TranscriptMismatch(RuntimeError):
    """Replay diverged from the recorded judgment stream."""


@dataclass
class TranscriptJudge:
    """Replays a recorded sequence of (batch, order) judgments in order.

    The requested batch must match the recorded one exactly (same ids,
    same request order); any divergence means the surrounding run is no
    longer the one that was recorded.
    """

    entries: list[tuple[list[str], list[str]]]
    _cursor: int = field(default=0, init=False, repr=False)

    def __call__(self, batch: Sequence[str]) -> list[str]:
        if self._cursor >= len(self.entries):
            raise TranscriptMismatch(
                f"transcript exhausted after {len(self.entries)} judgments"
            )
        recorded_batch, recorded_order = self.entries[self._cursor]
        if list(batch) != recorded_batch:
            raise TranscriptMismatch(
                f"judgment {self._cursor}: requested batch {list(batch)} "
                f"differs from recorded batch {recorded_batch}"
            )
        self._cursor += 1
        return list(recorded_order)


@dataclass
class RecordingJudge:
    """Wraps another judge and keeps a replayable transcript."""

    inner: "SimulatedJudge | TranscriptJudge | HttpJudge"
    transcript: list[tuple[list[str], list[str]]] = field(default_factory=list)

    def __call__(self, batch: Sequence[str]) -> list[str]:
        order = list(self.inner(batch))
        self.transcript.append((list(batch), order))
        return order


def save_transcript(path: str | Path, entries: list[tuple[list[str], list[str]]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for batch, order in entries:
            fh.write(json.dumps({"batch": batch, "order": order}, sort_keys=True) + "\n")


def load_transcript(path: str | Path) -> list[tuple[list[str], list[str]]]:
    entries: list[tuple[list[str], list[str]]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            entries.append((list(record["batch"]), list(record["order"])))
    return entries


def _post_json(url: str, payload: dict, timeout: float) -> dict:
    request = urllib.request.Request(
        url,
        data=json.dumps(payload).encode("utf-8"),
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return json.loads(response.read().decode("utf-8"))


@dataclass
class HttpJudge:
    """Remote judge: POSTs {"batch": [{"item_id", "text"}, ...]} and expects
    {"order": [item_id, ...]} back. Only used in integration mode."""

    url: str
    texts: Mapping[str, str]
    timeout: float = 30.0

    def __call__(self, batch: Sequence[str]) -> list[str]:
        payload = {
            "batch": [
                {"item_id": item, "text": self.texts.get(item, "")} for item in batch
            ]
        }
        response = _post_json(self.url, payload, self.timeout)
        return list(response["order"])
