"""Line-delimited JSON record schemas and validated loaders.

One record per line, UTF-8, canonical key order on write. Unknown
fields are preserved by the raw read/write pair, so round-tripping a
file through this module is the identity; the typed loaders are views
over the validated raw records.
"""

from __future__ import annotations

import csv
import json
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Callable, Iterable

import numpy as np

from rageval.clq import ConfigPoint, PriceSheet
from rageval.fusion import RunList, ScoredDoc
from rageval.pools import AnswerRecord, GradedPassage, GradedPool
from rageval.probes import CANDIDATE_KEYS, Candidate, ProbeBundle


class RecordError(ValueError):
    """A record failed schema validation; carries file path and line number."""

    def __init__(self, path: str | Path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def canonical_dumps(obj: Any) -> str:
    """Deterministic JSON: sorted keys, compact separators, raw UTF-8."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def read_raw(path: str | Path) -> list[tuple[int, dict]]:
    """Parse a JSONL file into (line_number, record) pairs."""
    out: list[tuple[int, dict]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise RecordError(path, line_no, "record must be a JSON object")
            out.append((line_no, record))
    return out


def write_raw(path: str | Path, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(canonical_dumps(record) + "\n")


def _require(record: dict, field: str, kind, path, line) -> Any:
    if field not in record:
        raise RecordError(path, line, f"missing field {field!r}")
    value = record[field]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise RecordError(
            path, line, f"field {field!r} must be {kind.__name__}, got {type(value).__name__}"
        )
    return value


# --- graded pools ---------------------------------------------------------

def load_pools(path: str | Path) -> dict[str, GradedPool]:
    """Pool records {query_id, doc_id, grade, facet_key?} grouped per query."""
    grouped: dict[str, list[GradedPassage]] = {}
    seen: set[tuple[str, str]] = set()
    for line_no, record in read_raw(path):
        query_id = _require(record, "query_id", str, path, line_no)
        doc_id = _require(record, "doc_id", str, path, line_no)
        grade = _require(record, "grade", int, path, line_no)
        if not 1 <= grade <= 5:
            raise RecordError(path, line_no, f"grade must be in 1..5, got {grade}")
        if (query_id, doc_id) in seen:
            raise RecordError(
                path, line_no, f"duplicate (query_id, doc_id) = ({query_id!r}, {doc_id!r})"
            )
        seen.add((query_id, doc_id))
        facet = record.get("facet_key")
        if facet is not None and not isinstance(facet, str):
            raise RecordError(path, line_no, "facet_key must be a string when present")
        grouped.setdefault(query_id, []).append(GradedPassage(doc_id, grade, facet))
    return {qid: GradedPool(qid, passages) for qid, passages in grouped.items()}


def pool_records(pools: Iterable[GradedPool]) -> list[dict]:
    out = []
    for pool in pools:
        for p in pool.passages:
            record = {"query_id": pool.query_id, "doc_id": p.doc_id, "grade": p.grade}
            if p.facet_key is not None:
                record["facet_key"] = p.facet_key
            out.append(record)
    return out


# --- run lists ------------------------------------------------------------

def load_runs(path: str | Path) -> dict[tuple[str, str], RunList]:
    """Run records {query_id, doc_id, rank, score, system} grouped per (query, system)."""
    grouped: dict[tuple[str, str], list[tuple[int, str, float]]] = {}
    seen: set[tuple[str, str, str]] = set()
    for line_no, record in read_raw(path):
        query_id = _require(record, "query_id", str, path, line_no)
        doc_id = _require(record, "doc_id", str, path, line_no)
        rank = _require(record, "rank", int, path, line_no)
        score = _require(record, "score", float, path, line_no)
        system = _require(record, "system", str, path, line_no)
        if rank < 1:
            raise RecordError(path, line_no, f"rank must be >= 1, got {rank}")
        key = (query_id, system, doc_id)
        if key in seen:
            raise RecordError(
                path, line_no, f"duplicate doc {doc_id!r} in run {system!r} for {query_id!r}"
            )
        seen.add(key)
        grouped.setdefault((query_id, system), []).append((rank, doc_id, score))
    out: dict[tuple[str, str], RunList] = {}
    for (query_id, system), rows in grouped.items():
        rows.sort(key=lambda r: r[0])
        out[(query_id, system)] = RunList(
            query_id=query_id,
            system_label=system,
            entries=[ScoredDoc(doc_id, score) for _, doc_id, score in rows],
        )
    return out


def run_records(runs: Iterable[RunList]) -> list[dict]:
    out = []
    for run in runs:
        for rank, entry in enumerate(run.entries, start=1):
            out.append(
                {
                    "query_id": run.query_id,
                    "doc_id": entry.doc_id,
                    "rank": rank,
                    "score": entry.score,
                    "system": run.system_label,
                }
            )
    return out


# --- texts ------------------------------------------------------------------

def load_texts(path: str | Path) -> dict[str, str]:
    """Text records {doc_id, text}."""
    out: dict[str, str] = {}
    for line_no, record in read_raw(path):
        doc_id = _require(record, "doc_id", str, path, line_no)
        text = _require(record, "text", str, path, line_no)
        if doc_id in out:
            raise RecordError(path, line_no, f"duplicate doc_id {doc_id!r}")
        out[doc_id] = text
    return out


# --- answers ----------------------------------------------------------------

def load_answers(path: str | Path) -> dict[str, AnswerRecord]:
    """Answer records {query_id, gold_evidence, answer_correct?}."""
    out: dict[str, AnswerRecord] = {}
    for line_no, record in read_raw(path):
        query_id = _require(record, "query_id", str, path, line_no)
        gold = _require(record, "gold_evidence", list, path, line_no)
        if not all(isinstance(d, str) for d in gold):
            raise RecordError(path, line_no, "gold_evidence must be a list of doc_ids")
        if len(set(gold)) != len(gold):
            raise RecordError(path, line_no, "gold_evidence contains duplicates")
        correct = record.get("answer_correct")
        if correct is not None and not isinstance(correct, bool):
            raise RecordError(path, line_no, "answer_correct must be a boolean when present")
        if query_id in out:
            raise RecordError(path, line_no, f"duplicate answer for query {query_id!r}")
        out[query_id] = AnswerRecord(query_id, set(gold), correct)
    return out


def answer_records(answers: Iterable[AnswerRecord]) -> list[dict]:
    out = []
    for a in answers:
        record: dict[str, Any] = {
            "query_id": a.query_id,
            "gold_evidence": sorted(a.gold_evidence),
        }
        if a.answer_correct is not None:
            record["answer_correct"] = a.answer_correct
        out.append(record)
    return out


# --- probe bundles ----------------------------------------------------------

def load_bundles(path: str | Path) -> dict[str, ProbeBundle]:
    """Bundle records {query_id, query_text, language, candidates{C1..C4}}."""
    out: dict[str, ProbeBundle] = {}
    for line_no, record in read_raw(path):
        query_id = _require(record, "query_id", str, path, line_no)
        query_text = _require(record, "query_text", str, path, line_no)
        language = _require(record, "language", str, path, line_no)
        raw_candidates = _require(record, "candidates", dict, path, line_no)
        candidates: dict[str, Candidate] = {}
        for key in CANDIDATE_KEYS:
            if key not in raw_candidates:
                raise RecordError(path, line_no, f"candidates missing {key!r}")
            cand = raw_candidates[key]
            for fld in ("text", "author", "topic"):
                if not isinstance(cand.get(fld), str):
                    raise RecordError(path, line_no, f"candidate {key} needs string {fld!r}")
            candidates[key] = Candidate(cand["text"], cand["author"], cand["topic"])
        if query_id in out:
            raise RecordError(path, line_no, f"duplicate bundle for query {query_id!r}")
        try:
            out[query_id] = ProbeBundle(query_text, candidates, language)
        except ValueError as exc:
            raise RecordError(path, line_no, str(exc)) from exc
    return out


def bundle_records(bundles: dict[str, ProbeBundle]) -> list[dict]:
    out = []
    for query_id, bundle in bundles.items():
        out.append(
            {
                "query_id": query_id,
                "query_text": bundle.query_text,
                "language": bundle.language,
                "candidates": {
                    key: {"text": c.text, "author": c.author, "topic": c.topic}
                    for key, c in bundle.candidates.items()
                },
            }
        )
    return out


# --- vectors ------------------------------------------------------------------

def load_vectors(path: str | Path) -> dict[str, dict[str, np.ndarray]]:
    """Vector records {text_hash, provider, dim, values} keyed provider -> hash."""
    out: dict[str, dict[str, np.ndarray]] = {}
    for line_no, record in read_raw(path):
        key = _require(record, "text_hash", str, path, line_no)
        provider = _require(record, "provider", str, path, line_no)
        dim = _require(record, "dim", int, path, line_no)
        values = _require(record, "values", list, path, line_no)
        if len(values) != dim:
            raise RecordError(
                path, line_no, f"vector has {len(values)} values but dim={dim}"
            )
        store = out.setdefault(provider, {})
        if key in store:
            raise RecordError(path, line_no, f"duplicate vector for hash {key!r}")
        store[key] = np.asarray(values, dtype=float)
    return out


def vector_records(
    vectors: dict[str, dict[str, np.ndarray]]
) -> list[dict]:
    out = []
    for provider in sorted(vectors):
        for key in sorted(vectors[provider]):
            vec = vectors[provider][key]
            out.append(
                {
                    "text_hash": key,
                    "provider": provider,
                    "dim": len(vec),
                    "values": [float(v) for v in vec],
                }
            )
    return out


# --- config points and prices ---------------------------------------------

def load_points(path: str | Path) -> list[ConfigPoint]:
    """Config-point records for the cost/latency/quality layer."""
    out: list[ConfigPoint] = []
    for line_no, record in read_raw(path):
        config_id = _require(record, "config_id", str, path, line_no)
        if "cost_per_1k_queries" not in record:
            raise RecordError(path, line_no, "missing field 'cost_per_1k_queries'")
        try:
            cost = Decimal(str(record["cost_per_1k_queries"]))
        except InvalidOperation as exc:
            raise RecordError(path, line_no, "cost_per_1k_queries is not a number") from exc
        quality = record.get("quality", {})
        if not isinstance(quality, dict):
            raise RecordError(path, line_no, "quality must be an object")
        try:
            out.append(
                ConfigPoint(
                    config_id=config_id,
                    cost_per_1k_queries=cost,
                    latency_p50=record.get("latency_p50"),
                    latency_p95=record.get("latency_p95"),
                    latency_samples=record.get("latency_samples"),
                    quality={k: float(v) for k, v in quality.items()},
                    k=record.get("k"),
                )
            )
        except ValueError as exc:
            raise RecordError(path, line_no, str(exc)) from exc
    return out


def point_records(points: Iterable[ConfigPoint]) -> list[dict]:
    out = []
    for p in points:
        record: dict[str, Any] = {
            "config_id": p.config_id,
            "cost_per_1k_queries": str(p.cost_per_1k_queries),
            "latency_p50": p.latency_p50,
            "quality": dict(sorted(p.quality.items())),
        }
        if p.latency_p95 is not None:
            record["latency_p95"] = p.latency_p95
        if p.k is not None:
            record["k"] = p.k
        out.append(record)
    return out


def load_price_sheet(path: str | Path) -> PriceSheet:
    """Price sheet config: {"rerank_per_1k": {...}, "generator_input_per_1m": {...}}."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    try:
        return PriceSheet(
            rerank_per_1k={k: Decimal(str(v)) for k, v in raw.get("rerank_per_1k", {}).items()},
            generator_input_per_1m={
                k: Decimal(str(v)) for k, v in raw.get("generator_input_per_1m", {}).items()
            },
        )
    except (InvalidOperation, ValueError) as exc:
        raise ValueError(f"{path}: invalid price sheet: {exc}") from exc


# --- CSV export -------------------------------------------------------------

def export_csv(path: str | Path, rows: list[dict], columns: list[str] | None = None) -> None:
    """Flat CSV export of homogeneous record dicts."""
    if columns is None:
        columns = sorted({key for row in rows for key in row})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, "") for key in columns})


def import_csv(path: str | Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [dict(row) for row in csv.DictReader(fh)]


def jsonl_records(
    items: Iterable[Any], to_record: Callable[[Any], dict]
) -> list[dict]:
    return [to_record(item) for item in items]
