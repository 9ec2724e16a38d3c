"""Stage sequencing: merge -> prune -> refine -> score -> proc -> clq -> diagnose.

Each stage reads the previous stage's output (or a configured input
file), writes one canonical JSONL/JSON artifact into the run directory,
and appends a digested record to the manifest. Stage cache keys cover
input digests, config digest, and the derived stage seed, so rerunning
an unchanged configuration skips completed stages and reproduces
byte-identical outputs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from rageval import ceilings, clq, fusion, margins, metrics, probes, ranker, records
from rageval.judges import SimulatedJudge, TranscriptJudge, load_transcript
from rageval.manifest import (
    ManifestWriter,
    StageRecord,
    WorkspaceManifest,
    cache_key,
    config_digest,
    derive_seed,
    file_digest,
    load_manifest,
)
from rageval.pools import CandidatePool, GradedPool, RetrievedList

logger = logging.getLogger(__name__)

STAGE_ORDER = ("merge", "prune", "refine", "score", "proc", "clq", "diagnose")


class StageFailure(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage!r} failed: {message}")
        self.stage = stage


@dataclass
class PipelineConfig:
    """Validated snapshot of one run's configuration."""

    run_id: str
    seed: int
    workspace: Path
    inputs: dict[str, Any]
    ks: list[int] = field(default_factory=lambda: [10, 30])
    rarity: metrics.RarityParams = field(default_factory=metrics.RarityParams)
    fusion_params: fusion.FusionParams = field(default_factory=fusion.FusionParams)
    suppress_enabled: bool = False
    suppress_threshold: float = 0.9
    prune_budgets: dict[int, int | None] = field(
        default_factory=lambda: {5: None, 4: None, 3: 10, 2: 5, 1: 5}
    )
    refine_enabled: bool = False
    refine_judge: str = "simulated"
    refine_noise_scale: float = 0.0
    refine_transcript: str | None = None
    ranker_config: ranker.RankerConfig = field(default_factory=ranker.RankerConfig)
    clq_enabled: bool = False
    clq_quality_metric: str = metrics.quality_key(metrics.RA_NWG, 10)
    clq_slo_ms: float | None = None
    clq_budget: str | None = None
    diagnose_enabled: bool = False
    diagnose_provider: str = "recorded"
    diagnose_ablations: list[str] = field(default_factory=list)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict, workspace: str | Path, base_dir: str | Path = ".") -> "PipelineConfig":
        base = Path(base_dir)
        inputs = dict(raw.get("inputs", {}))
        for key, value in inputs.items():
            if isinstance(value, list):
                inputs[key] = [str(base / v) for v in value]
            elif isinstance(value, str):
                inputs[key] = str(base / value)
        rarity_raw = raw.get("rarity", {})
        ranker_raw = dict(raw.get("refine", {}).get("ranker", {}))
        refine_raw = raw.get("refine", {})
        clq_raw = raw.get("clq", {})
        diagnose_raw = raw.get("diagnose", {})
        budgets_raw = raw.get("prune", {}).get("budgets", None)
        budgets = (
            {int(g): (None if b is None else int(b)) for g, b in budgets_raw.items()}
            if budgets_raw is not None
            else {5: None, 4: None, 3: 10, 2: 5, 1: 5}
        )
        return cls(
            run_id=str(raw.get("run_id", "run")),
            seed=int(raw.get("seed", 0)),
            workspace=Path(workspace),
            inputs=inputs,
            ks=[int(k) for k in raw.get("ks", [10, 30])],
            rarity=metrics.RarityParams(**rarity_raw),
            fusion_params=fusion.FusionParams(**raw.get("fusion", {})),
            suppress_enabled=bool(raw.get("suppress", {}).get("enabled", False)),
            suppress_threshold=float(raw.get("suppress", {}).get("jaccard_threshold", 0.9)),
            prune_budgets=budgets,
            refine_enabled=bool(refine_raw.get("enabled", False)),
            refine_judge=str(refine_raw.get("judge", "simulated")),
            refine_noise_scale=float(refine_raw.get("noise_scale", 0.0)),
            refine_transcript=refine_raw.get("transcript"),
            ranker_config=ranker.RankerConfig(**ranker_raw),
            clq_enabled=bool(clq_raw.get("enabled", False)),
            clq_quality_metric=str(
                clq_raw.get("quality_metric", metrics.quality_key(metrics.RA_NWG, 10))
            ),
            clq_slo_ms=clq_raw.get("slo_ms"),
            clq_budget=clq_raw.get("budget"),
            diagnose_enabled=bool(diagnose_raw.get("enabled", False)),
            diagnose_provider=str(diagnose_raw.get("provider", "recorded")),
            diagnose_ablations=list(diagnose_raw.get("ablations", [])),
            raw=raw,
        )

    @property
    def run_dir(self) -> Path:
        return self.workspace / self.run_id


def load_config(path: str | Path, workspace: str | Path) -> PipelineConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return PipelineConfig.from_dict(raw, workspace, base_dir=path.parent)


def _write_stage(
    cfg: PipelineConfig,
    writer: ManifestWriter,
    manifest: WorkspaceManifest,
    stage: str,
    filename: str,
    payload: list[dict] | dict,
    input_digests: dict[str, str],
    details: dict | None = None,
) -> Path:
    path = cfg.run_dir / filename
    if isinstance(payload, dict):
        path.write_text(records.canonical_dumps(payload) + "\n", encoding="utf-8")
    else:
        records.write_raw(path, payload)
    record = StageRecord(
        stage=stage,
        cache_key=cache_key(stage, input_digests, manifest.config_digest, derive_seed(cfg.seed, stage)),
        outputs={filename: file_digest(path)},
        details=details or {},
    )
    writer.stage(record)
    manifest.stages.append(record)
    return path


def _stage_cached(
    cfg: PipelineConfig,
    previous: WorkspaceManifest | None,
    manifest: WorkspaceManifest,
    writer: ManifestWriter,
    stage: str,
    input_digests: dict[str, str],
) -> bool:
    """Reuse a completed stage when inputs, config, and seed are unchanged."""
    if previous is None:
        return False
    record = previous.stage_by_name(stage)
    if record is None:
        return False
    key = cache_key(stage, input_digests, manifest.config_digest, derive_seed(cfg.seed, stage))
    if record.cache_key != key:
        return False
    for name, digest in record.outputs.items():
        path = cfg.run_dir / name
        if not path.exists() or file_digest(path) != digest:
            return False
    writer.stage(record)
    manifest.stages.append(record)
    logger.info("stage %s: reused cached output", stage)
    return True


def _input_digest(cfg: PipelineConfig, key: str) -> dict[str, str]:
    value = cfg.inputs.get(key)
    if value is None:
        return {}
    paths = value if isinstance(value, list) else [value]
    return {str(p): file_digest(p) for p in paths}


def _stage_output_digest(manifest: WorkspaceManifest, stage: str) -> dict[str, str]:
    record = manifest.stage_by_name(stage)
    return dict(record.outputs) if record else {}


def run_pipeline(cfg: PipelineConfig) -> WorkspaceManifest:
    """Execute all enabled stages in order; halt with a partial manifest on failure."""
    cfg.run_dir.mkdir(parents=True, exist_ok=True)
    previous: WorkspaceManifest | None = None
    manifest_path = cfg.run_dir / "manifest.jsonl"
    if manifest_path.exists():
        try:
            previous = load_manifest(cfg.run_dir)
        except ValueError:
            previous = None
        manifest_path.unlink()

    input_digests = {}
    for key, value in sorted(cfg.inputs.items()):
        for path, digest in _input_digest(cfg, key).items():
            input_digests[path] = digest

    from rageval import __version__

    writer = ManifestWriter(cfg.run_dir)
    snapshot = cfg.raw or {}
    manifest = WorkspaceManifest(
        run_id=cfg.run_id,
        tool_version=__version__,
        seed=cfg.seed,
        config_digest=config_digest(snapshot),
        config_snapshot=snapshot,
        inputs=input_digests,
    )
    writer.start(cfg.run_id, cfg.seed, snapshot, input_digests)

    try:
        pools = records.load_pools(cfg.inputs["pools"])
    except (KeyError, records.RecordError) as exc:
        message = "config has no 'pools' input" if isinstance(exc, KeyError) else str(exc)
        writer.finish("failed", message)
        manifest.status = "failed"
        raise StageFailure("merge", message) from exc

    try:
        _run_merge(cfg, pools, manifest, writer, previous)
        _run_prune(cfg, pools, manifest, writer, previous)
        if cfg.refine_enabled:
            _run_refine(cfg, pools, manifest, writer, previous)
        _run_score(cfg, pools, manifest, writer, previous)
        _run_proc(cfg, pools, manifest, writer, previous)
        if cfg.clq_enabled:
            _run_clq(cfg, manifest, writer, previous)
        if cfg.diagnose_enabled:
            _run_diagnose(cfg, manifest, writer, previous)
    except StageFailure as exc:
        writer.finish("partial", str(exc))
        manifest.status = "partial"
        manifest.failure = str(exc)
        raise
    writer.finish("complete")
    manifest.status = "complete"
    return manifest


# --- individual stages ------------------------------------------------------

def _run_merge(cfg, pools, manifest, writer, previous) -> None:
    stage = "merge"
    digests = {**_input_digest(cfg, "runs"), **_input_digest(cfg, "texts")}
    if _stage_cached(cfg, previous, manifest, writer, stage, digests):
        return
    try:
        runs_by_key: dict[tuple[str, str], fusion.RunList] = {}
        for path in cfg.inputs["runs"]:
            runs_by_key.update(records.load_runs(path))
    except (KeyError, records.RecordError) as exc:
        raise StageFailure(stage, str(exc)) from exc
    by_query: dict[str, list[fusion.RunList]] = {}
    for (query_id, _system), run in sorted(runs_by_key.items()):
        by_query.setdefault(query_id, []).append(run)
    texts = None
    if cfg.suppress_enabled:
        texts_path = cfg.inputs.get("texts")
        if texts_path is None:
            raise StageFailure(stage, "suppression enabled but no 'texts' input")
        texts = records.load_texts(texts_path)
    fused_runs = []
    for query_id in sorted(by_query):
        fused = fusion.rrf_merge(by_query[query_id], cfg.fusion_params)
        if texts is not None:
            fused = fusion.near_duplicate_suppress(fused, texts, cfg.suppress_threshold)
        fused_runs.append(fused)
    _write_stage(
        cfg, writer, manifest, stage, "fused.jsonl",
        records.run_records(fused_runs), digests,
        details={"queries": len(fused_runs)},
    )


def _load_fused(cfg) -> dict[str, fusion.RunList]:
    loaded = records.load_runs(cfg.run_dir / "fused.jsonl")
    return {query_id: run for (query_id, _), run in loaded.items()}


def _run_prune(cfg, pools, manifest, writer, previous) -> None:
    stage = "prune"
    digests = _stage_output_digest(manifest, "merge")
    if _stage_cached(cfg, previous, manifest, writer, stage, digests):
        return
    fused = _load_fused(cfg)
    candidate_records = []
    for query_id in sorted(fused):
        pool = pools.get(query_id)
        if pool is None:
            logger.warning("no graded pool for query %r; prune skips it", query_id)
            continue
        try:
            candidates = fusion.grade_bucketed_prune(pool, fused[query_id], cfg.prune_budgets)
        except ValueError as exc:
            raise StageFailure(stage, str(exc)) from exc
        for position, doc_id in enumerate(candidates.doc_ids, start=1):
            candidate_records.append(
                {
                    "query_id": query_id,
                    "doc_id": doc_id,
                    "rank": position,
                    "provenance": candidates.provenance_label,
                }
            )
    _write_stage(
        cfg, writer, manifest, stage, "candidates.jsonl", candidate_records, digests
    )


def _load_candidates(cfg) -> dict[str, CandidatePool]:
    grouped: dict[str, list[tuple[int, str, str]]] = {}
    for _line, record in records.read_raw(cfg.run_dir / "candidates.jsonl"):
        grouped.setdefault(record["query_id"], []).append(
            (record["rank"], record["doc_id"], record.get("provenance", ""))
        )
    out = {}
    for query_id, rows in grouped.items():
        rows.sort()
        out[query_id] = CandidatePool(
            query_id=query_id,
            doc_ids=[doc_id for _, doc_id, _ in rows],
            provenance_label=rows[0][2] if rows else "",
        )
    return out


def _make_judge(cfg, pool: GradedPool, weights) -> Any:
    if cfg.refine_judge == "simulated":
        # True utilities default to the grade weights with a tiny stable
        # per-doc offset so the simulator has a strict order to recover.
        utilities = {}
        for passage in sorted(pool.passages, key=lambda p: p.doc_id):
            jitter = (derive_seed(cfg.seed, "judge-jitter", pool.query_id, passage.doc_id) % 1000) / 1e7
            utilities[passage.doc_id] = weights.for_grade(passage.grade) + jitter
        return SimulatedJudge(
            true_utilities=utilities,
            noise_scale=cfg.refine_noise_scale,
            seed=derive_seed(cfg.seed, "judge", pool.query_id),
        )
    if cfg.refine_judge == "transcript":
        if not cfg.refine_transcript:
            raise StageFailure("refine", "transcript judge needs refine.transcript path")
        return TranscriptJudge(load_transcript(cfg.refine_transcript))
    if cfg.refine_judge == "http":
        # integration mode: remote judge reached by URL from the config
        url = cfg.raw.get("refine", {}).get("url")
        if not url:
            raise StageFailure("refine", "http judge needs refine.url")
        texts_path = cfg.inputs.get("texts")
        texts = records.load_texts(texts_path) if texts_path else {}
        from rageval.judges import HttpJudge

        return HttpJudge(url, texts)
    raise StageFailure("refine", f"unknown judge kind {cfg.refine_judge!r}")


def _run_refine(cfg, pools, manifest, writer, previous) -> None:
    stage = "refine"
    digests = _stage_output_digest(manifest, "prune")
    if _stage_cached(cfg, previous, manifest, writer, stage, digests):
        return
    candidates = _load_candidates(cfg)
    refined_records = []
    for query_id in sorted(candidates):
        pool = pools.get(query_id)
        if pool is None:
            continue
        restricted = GradedPool(
            query_id=query_id,
            passages=[p for p in pool.passages if p.doc_id in candidates[query_id].as_set()],
        )
        weights = metrics.compute_weights(restricted, cfg.rarity)
        judge = _make_judge(cfg, restricted, weights)
        rng = np.random.default_rng(derive_seed(cfg.seed, stage, query_id))
        try:
            result = ranker.refine(restricted, weights, judge, cfg.ranker_config, rng)
        except ranker.JudgeFailure as exc:
            raise StageFailure(stage, str(exc)) from exc
        for position, doc_id in enumerate(result.top, start=1):
            refined_records.append(
                {
                    "query_id": query_id,
                    "doc_id": doc_id,
                    "rank": position,
                    "score": result.scores[doc_id],
                    "system": "refined",
                    "converged": result.converged,
                    "iterations": result.iterations,
                    "locks": result.lock_count,
                }
            )
    _write_stage(cfg, writer, manifest, stage, "refined.jsonl", refined_records, digests)


def _evaluation_lists(cfg, manifest) -> dict[str, RetrievedList]:
    """The ranking under evaluation: refined order when present, else fused."""
    source = "refined.jsonl" if manifest.stage_by_name("refine") else "fused.jsonl"
    grouped: dict[str, list[tuple[int, str]]] = {}
    for _line, record in records.read_raw(cfg.run_dir / source):
        grouped.setdefault(record["query_id"], []).append((record["rank"], record["doc_id"]))
    out = {}
    for query_id, rows in grouped.items():
        rows.sort()
        out[query_id] = RetrievedList(query_id, [doc_id for _, doc_id in rows])
    return out


def _run_score(cfg, pools, manifest, writer, previous) -> None:
    stage = "score"
    digests = {
        **(_stage_output_digest(manifest, "refine") or _stage_output_digest(manifest, "merge")),
        **_input_digest(cfg, "answers"),
    }
    if _stage_cached(cfg, previous, manifest, writer, stage, digests):
        return
    lists = _evaluation_lists(cfg, manifest)
    answers = (
        records.load_answers(cfg.inputs["answers"]) if "answers" in cfg.inputs else {}
    )
    rows = []
    for query_id in sorted(lists):
        pool = pools.get(query_id)
        if pool is None:
            continue
        for row in metrics.score_query(pool, lists[query_id], cfg.ks, cfg.rarity):
            rows.append(
                {
                    "query_id": row.query_id,
                    "metric": row.metric,
                    "k": row.k,
                    "value": row.value,
                }
            )
        for k in cfg.ks:
            rows.append(
                {
                    "query_id": query_id,
                    "metric": "ungraded_count",
                    "k": k,
                    "value": metrics.ungraded_in_top_k(pool, lists[query_id], k),
                }
            )
            if query_id in answers:
                hit = metrics.hit_at_k(answers[query_id], lists[query_id], k)
                rows.append(
                    {
                        "query_id": query_id,
                        "metric": "hit",
                        "k": k,
                        "value": None if hit is None else float(hit),
                    }
                )
    details: dict[str, Any] = {}
    if answers:
        scoreable = [a for a in answers.values() if a.query_id in lists]
        try:
            details["acc_given_hit"] = {
                str(k): metrics.acc_given_hit(scoreable, lists, k) for k in cfg.ks
            }
        except ValueError as exc:
            raise StageFailure(stage, str(exc)) from exc
    _write_stage(cfg, writer, manifest, stage, "metrics.jsonl", rows, digests, details)


def _run_proc(cfg, pools, manifest, writer, previous) -> None:
    stage = "proc"
    digests = {
        **_stage_output_digest(manifest, "prune"),
        **_stage_output_digest(manifest, "score"),
    }
    if _stage_cached(cfg, previous, manifest, writer, stage, digests):
        return
    candidates = _load_candidates(cfg)
    lists = _evaluation_lists(cfg, manifest)
    rows = []
    for query_id in sorted(candidates):
        pool = pools.get(query_id)
        retrieved = lists.get(query_id)
        if pool is None or retrieved is None:
            continue
        weights = metrics.compute_weights(pool, cfg.rarity)
        for k in cfg.ks:
            actuals = {
                metrics.RA_NWG: metrics.ra_nwg_at_k(pool, weights, retrieved, k),
                metrics.N_RECALL_4PLUS: metrics.n_recall_at_k(pool, retrieved, k, 4),
                metrics.N_RECALL_5: metrics.n_recall_at_k(pool, retrieved, k, 5),
            }
            for metric_name, actual in actuals.items():
                row = ceilings.ceiling_row(
                    pool, weights, candidates[query_id], metric_name, k, actual
                )
                rows.append(
                    {
                        "query_id": query_id,
                        "metric": metric_name,
                        "k": k,
                        "actual": row.actual,
                        "ceiling": row.ceiling,
                        "realized": row.realized,
                        "headroom": row.headroom,
                    }
                )
    _write_stage(cfg, writer, manifest, stage, "proc.jsonl", rows, digests)


def _run_clq(cfg, manifest, writer, previous) -> None:
    stage = "clq"
    digests = {**_input_digest(cfg, "points"), **_input_digest(cfg, "prices")}
    if _stage_cached(cfg, previous, manifest, writer, stage, digests):
        return
    points_path = cfg.inputs.get("points")
    if points_path is None:
        raise StageFailure(stage, "clq enabled but no 'points' input")
    try:
        points = records.load_points(points_path)
    except records.RecordError as exc:
        raise StageFailure(stage, str(exc)) from exc
    payload: dict[str, Any] = {"points": records.point_records(points)}
    for point_record, point in zip(payload["points"], points):
        try:
            point_record["efficiency"] = point.efficiency()
        except ValueError:
            point_record["efficiency"] = None
    quality_metric = cfg.clq_quality_metric
    try:
        frontier = clq.pareto_frontier(points)
        payload["frontier"] = [p.config_id for p in frontier]
    except ValueError as exc:
        raise StageFailure(stage, str(exc)) from exc
    payload["jitter"] = clq.jitter_flags(points)
    if cfg.clq_slo_ms is not None:
        shortlist = clq.select_under_slo(
            points,
            clq.SloConstraints(max_latency_ms=cfg.clq_slo_ms),
            "latency_bound",
            quality_metric,
        )
        payload["slo_shortlist"] = {
            "rule": "latency_bound",
            "max_latency_ms": cfg.clq_slo_ms,
            "entries": [p.config_id for p in shortlist.entries],
            "diagnostic": shortlist.diagnostic,
        }
    if cfg.clq_budget is not None:
        shortlist = clq.select_under_slo(
            points,
            clq.SloConstraints(max_cost=cfg.clq_budget),
            "cost_bound",
            quality_metric,
        )
        payload["budget_shortlist"] = {
            "rule": "cost_bound",
            "max_cost": str(cfg.clq_budget),
            "entries": [p.config_id for p in shortlist.entries],
            "diagnostic": shortlist.diagnostic,
        }
    _write_stage(cfg, writer, manifest, stage, "clq.json", payload, digests)


def _run_diagnose(cfg, manifest, writer, previous) -> None:
    stage = "diagnose"
    digests = {**_input_digest(cfg, "bundles"), **_input_digest(cfg, "vectors")}
    if _stage_cached(cfg, previous, manifest, writer, stage, digests):
        return
    bundles_path = cfg.inputs.get("bundles")
    vectors_path = cfg.inputs.get("vectors")
    if bundles_path is None:
        raise StageFailure(stage, "diagnostics enabled but no 'bundles' input")
    provider_url = cfg.raw.get("diagnose", {}).get("provider_url")
    try:
        bundles = records.load_bundles(bundles_path)
    except records.RecordError as exc:
        raise StageFailure(stage, str(exc)) from exc
    if provider_url:
        # integration mode: live embeddings instead of the recorded store
        provider: Any = margins.HttpEmbeddingProvider(provider_url, cfg.diagnose_provider)
    else:
        if vectors_path is None:
            raise StageFailure(stage, "diagnostics enabled but no 'vectors' input")
        try:
            stores = records.load_vectors(vectors_path)
        except records.RecordError as exc:
            raise StageFailure(stage, str(exc)) from exc
        store = stores.get(cfg.diagnose_provider)
        if store is None:
            raise StageFailure(
                stage,
                f"vectors file has no provider {cfg.diagnose_provider!r}; "
                f"available: {sorted(stores)}",
            )
        provider = margins.RecordedVectorProvider(store, cfg.diagnose_provider)
    ablation_kinds = cfg.diagnose_ablations or [
        k for k in probes.ABLATION_KINDS if k != "base"
    ]
    base_margins: dict[str, margins.MarginTriple] = {}
    for query_id in sorted(bundles):
        try:
            base_margins[query_id] = margins.margins(
                margins.embed_bundle(bundles[query_id], provider, query_id)
            )
        except (margins.MissingVectorError, ValueError) as exc:
            raise StageFailure(stage, f"base embedding failed for {query_id!r}: {exc}") from exc
    rows: list[dict] = []
    for query_id in sorted(bundles):
        triple = base_margins[query_id]
        rows.append(
            {
                "kind": "base_margins",
                "query_id": query_id,
                "delta_name": triple.delta_name,
                "delta_topic": triple.delta_topic,
                "delta_both": triple.delta_both,
            }
        )
    for ablation in ablation_kinds:
        ablated_margins: dict[str, margins.MarginTriple] = {}
        for query_id in sorted(bundles):
            seed = derive_seed(cfg.seed, stage, ablation, query_id)
            try:
                transformed = probes.apply_ablation(bundles[query_id], ablation, seed)
                ablated_margins[query_id] = margins.margins(
                    margins.embed_bundle(transformed, provider, query_id)
                )
            except (margins.MissingVectorError, probes.TransformError, ValueError) as exc:
                raise StageFailure(
                    stage, f"ablation {ablation!r} failed for {query_id!r}: {exc}"
                ) from exc
        summary = margins.delta_delta_percent(base_margins, ablated_margins)
        rows.append(
            {
                "kind": "summary",
                "ablation": ablation,
                "mean_percent": summary.mean_percent,
                "included": len(summary.percent_by_query),
                "excluded": summary.excluded_queries,
            }
        )
        for query_id in sorted(summary.absolute_by_query):
            rows.append(
                {
                    "kind": "query",
                    "ablation": ablation,
                    "query_id": query_id,
                    "absolute_delta": summary.absolute_by_query[query_id],
                    "percent": summary.percent_by_query.get(query_id),
                }
            )
    _write_stage(cfg, writer, manifest, stage, "diagnostics.jsonl", rows, digests)
