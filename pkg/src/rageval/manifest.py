"""Workspace manifests: digests, seed derivation, stage records, caching.

A run's manifest is an append-only JSONL event log inside the run
directory. Events carry no timestamps, so identical inputs, config, and
seed reproduce byte-identical manifests; every referenced file is
recorded with its digest and can be verified later.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from rageval import __version__
from rageval.records import canonical_dumps

MANIFEST_NAME = "manifest.jsonl"


def file_digest(path: str | Path) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            sha.update(chunk)
    return "sha256:" + sha.hexdigest()


def config_digest(config: dict) -> str:
    return "sha256:" + hashlib.sha256(canonical_dumps(config).encode("utf-8")).hexdigest()


def derive_seed(run_seed: int, *parts: str) -> int:
    """Fan the run-level seed out to stages and queries, stably."""
    material = f"{run_seed}|" + "|".join(parts)
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % (2**63)


def cache_key(stage: str, input_digests: dict[str, str], cfg_digest: str, seed: int) -> str:
    payload = canonical_dumps(
        {"stage": stage, "inputs": input_digests, "config": cfg_digest, "seed": seed}
    )
    return "sha256:" + hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass
class StageRecord:
    stage: str
    cache_key: str
    outputs: dict[str, str]
    details: dict[str, Any] = field(default_factory=dict)


@dataclass
class WorkspaceManifest:
    run_id: str
    tool_version: str
    seed: int
    config_digest: str
    config_snapshot: dict
    inputs: dict[str, str] = field(default_factory=dict)
    stages: list[StageRecord] = field(default_factory=list)
    status: str = "running"
    failure: str | None = None

    def stage_by_name(self, name: str) -> StageRecord | None:
        for record in self.stages:
            if record.stage == name:
                return record
        return None


class ManifestWriter:
    """Appends run events to the manifest log; one writer per run."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.path = self.run_dir / MANIFEST_NAME

    def _append(self, event: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(canonical_dumps(event) + "\n")

    def start(
        self,
        run_id: str,
        seed: int,
        config_snapshot: dict,
        inputs: dict[str, str],
    ) -> None:
        self._append(
            {
                "event": "run_start",
                "run_id": run_id,
                "tool_version": __version__,
                "seed": seed,
                "config_digest": config_digest(config_snapshot),
                "config_snapshot": config_snapshot,
                "inputs": inputs,
            }
        )

    def stage(self, record: StageRecord) -> None:
        self._append(
            {
                "event": "stage",
                "stage": record.stage,
                "cache_key": record.cache_key,
                "outputs": record.outputs,
                "details": record.details,
            }
        )

    def finish(self, status: str, failure: str | None = None) -> None:
        event: dict[str, Any] = {"event": "run_end", "status": status}
        if failure is not None:
            event["failure"] = failure
        self._append(event)


def load_manifest(run_dir: str | Path) -> WorkspaceManifest:
    path = Path(run_dir) / MANIFEST_NAME
    manifest: WorkspaceManifest | None = None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            event = json.loads(line)
            kind = event.get("event")
            if kind == "run_start":
                manifest = WorkspaceManifest(
                    run_id=event["run_id"],
                    tool_version=event["tool_version"],
                    seed=event["seed"],
                    config_digest=event["config_digest"],
                    config_snapshot=event["config_snapshot"],
                    inputs=event["inputs"],
                )
            elif kind == "stage":
                if manifest is None:
                    raise ValueError(f"{path}: stage event before run_start")
                manifest.stages.append(
                    StageRecord(
                        stage=event["stage"],
                        cache_key=event["cache_key"],
                        outputs=event["outputs"],
                        details=event.get("details", {}),
                    )
                )
            elif kind == "run_end":
                if manifest is None:
                    raise ValueError(f"{path}: run_end event before run_start")
                manifest.status = event["status"]
                manifest.failure = event.get("failure")
    if manifest is None:
        raise ValueError(f"{path}: no run_start event found")
    return manifest


def verify_outputs(run_dir: str | Path, manifest: WorkspaceManifest) -> list[str]:
    """Recompute digests of every referenced output; return mismatch descriptions."""
    run_dir = Path(run_dir)
    problems: list[str] = []
    for record in manifest.stages:
        for name, digest in record.outputs.items():
            path = run_dir / name
            if not path.exists():
                problems.append(f"{record.stage}: missing output {name}")
            elif file_digest(path) != digest:
                problems.append(f"{record.stage}: digest mismatch for {name}")
    return problems
