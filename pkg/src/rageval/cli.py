"""Command-line entry point.

Subcommands mirror the pipeline stages plus analysis helpers:

    run       execute the full pipeline from a config file
    score     per-query metric rows for a pools + run file pair
    proc      ceiling rows for a pools + candidates pair
    merge     reciprocal-rank-fuse several run files
    prune     grade-bucketed pruning of a fused run
    refine    listwise refinement with the simulated judge
    diagnose  ablation margins over bundles + recorded vectors
    clq       cost table helpers and SLO shortlists over config points
    pareto    non-dominated subset of config points
    report    render a run directory's outputs

Global flags: --workspace (or RAGEVAL_WORKSPACE), --seed, --config.
"""

from __future__ import annotations

import argparse
import os
import sys
from decimal import Decimal
from pathlib import Path

import numpy as np

from rageval import __version__, ceilings, clq, fusion, margins, metrics, probes, ranker, records
from rageval.judges import SimulatedJudge
from rageval.manifest import derive_seed
from rageval.pipeline import StageFailure, load_config, run_pipeline
from rageval.pools import CandidatePool, RetrievedList
from rageval.report import FORMATS, render_report

WORKSPACE_ENV = "RAGEVAL_WORKSPACE"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rageval", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"rageval {__version__}")
    parser.add_argument(
        "--workspace",
        default=os.environ.get(WORKSPACE_ENV, "workspace"),
        help=f"workspace root (default: ${WORKSPACE_ENV} or ./workspace)",
    )
    parser.add_argument("--seed", type=int, default=0, help="run-level seed")
    parser.add_argument("--config", help="pipeline config file (JSON)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute the configured pipeline")

    p = sub.add_parser("score", help="score a run file against graded pools")
    p.add_argument("--pools", required=True)
    p.add_argument("--run", required=True, help="run file; first system per query is scored")
    p.add_argument("--system", default=None, help="system label to score (default: first)")
    p.add_argument("--ks", default="10,30")
    p.add_argument("--out", default="-")

    p = sub.add_parser("proc", help="ceiling rows for candidates vs full pools")
    p.add_argument("--pools", required=True)
    p.add_argument("--candidates", required=True, help="run file defining candidate pools")
    p.add_argument("--run", required=True, help="run file under evaluation")
    p.add_argument("--ks", default="10,30")
    p.add_argument("--out", default="-")

    p = sub.add_parser("merge", help="reciprocal rank fusion of run files")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--rrf-constant", type=float, default=60.0)
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--out", default="-")

    p = sub.add_parser("prune", help="grade-bucketed pruning of a fused run")
    p.add_argument("--pools", required=True)
    p.add_argument("--fused", required=True)
    p.add_argument(
        "--budgets",
        default="5:*,4:*,3:10,2:5,1:5",
        help="per-grade keep budgets, '*' = unlimited",
    )
    p.add_argument("--out", default="-")

    p = sub.add_parser("refine", help="listwise refinement with the simulated judge")
    p.add_argument("--pools", required=True)
    p.add_argument("--noise-scale", type=float, default=0.0)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--out", default="-")

    p = sub.add_parser("diagnose", help="ablation margins over probe bundles")
    p.add_argument("--bundles", required=True)
    p.add_argument("--vectors", required=True)
    p.add_argument("--provider", default="recorded")
    p.add_argument("--ablations", default=None, help="comma list (default: all)")
    p.add_argument("--out", default="-")

    p = sub.add_parser("clq", help="cost helpers and SLO shortlists")
    p.add_argument("--points", help="config points (JSONL)")
    p.add_argument("--prices", help="price sheet (JSON); default: built-in sheet")
    p.add_argument("--slo-ms", type=float, default=None)
    p.add_argument("--budget", default=None)
    p.add_argument("--quality-metric", default=metrics.quality_key(metrics.RA_NWG, 10))
    p.add_argument("--frontier-only", action="store_true")
    p.add_argument("--cost-table", action="store_true", help="print built-in cost tables")
    p.add_argument("--out", default="-")

    p = sub.add_parser("pareto", help="non-dominated subset of config points")
    p.add_argument("--points", required=True)
    p.add_argument(
        "--quality-metrics",
        default=",".join(clq.DEFAULT_QUALITY_OBJECTIVES),
    )
    p.add_argument("--out", default="-")

    p = sub.add_parser("report", help="render a run directory")
    p.add_argument("--run-id", required=True)
    p.add_argument("--format", default="table", choices=FORMATS)
    p.add_argument("--sections", default=None, help="comma list (default: all)")

    return parser


def _emit(out: str, text: str) -> None:
    if out == "-":
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def _emit_records(out: str, rows: list[dict]) -> None:
    _emit(out, "\n".join(records.canonical_dumps(r) for r in rows))


def _parse_ks(text: str) -> list[int]:
    return [int(k) for k in text.split(",") if k.strip()]


def _first_runs(path: str, system: str | None) -> dict[str, RetrievedList]:
    loaded = records.load_runs(path)
    out: dict[str, RetrievedList] = {}
    for (query_id, label), run in sorted(loaded.items()):
        if system is not None and label != system:
            continue
        out.setdefault(query_id, RetrievedList(query_id, run.doc_ids()))
    return out


def _cmd_score(args) -> int:
    pools = records.load_pools(args.pools)
    lists = _first_runs(args.run, args.system)
    ks = _parse_ks(args.ks)
    rows: list[dict] = []
    for query_id in sorted(lists):
        pool = pools.get(query_id)
        if pool is None:
            continue
        for row in metrics.score_query(pool, lists[query_id], ks):
            rows.append(
                {"query_id": row.query_id, "metric": row.metric, "k": row.k, "value": row.value}
            )
    _emit_records(args.out, rows)
    return 0


def _cmd_proc(args) -> int:
    pools = records.load_pools(args.pools)
    candidate_lists = _first_runs(args.candidates, None)
    lists = _first_runs(args.run, None)
    ks = _parse_ks(args.ks)
    rows: list[dict] = []
    for query_id in sorted(candidate_lists):
        pool = pools.get(query_id)
        retrieved = lists.get(query_id)
        if pool is None or retrieved is None:
            continue
        weights = metrics.compute_weights(pool)
        candidates = CandidatePool(query_id, candidate_lists[query_id].ranking)
        for k in ks:
            for metric_name, actual in (
                (metrics.RA_NWG, metrics.ra_nwg_at_k(pool, weights, retrieved, k)),
                (metrics.N_RECALL_4PLUS, metrics.n_recall_at_k(pool, retrieved, k, 4)),
            ):
                row = ceilings.ceiling_row(pool, weights, candidates, metric_name, k, actual)
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
    _emit_records(args.out, rows)
    return 0


def _cmd_merge(args) -> int:
    by_query: dict[str, list[fusion.RunList]] = {}
    for path in args.runs:
        for (query_id, _system), run in sorted(records.load_runs(path).items()):
            by_query.setdefault(query_id, []).append(run)
    params = fusion.FusionParams(rrf_constant=args.rrf_constant, per_list_depth=args.depth)
    fused = [fusion.rrf_merge(by_query[qid], params) for qid in sorted(by_query)]
    _emit_records(args.out, records.run_records(fused))
    return 0


def _parse_budgets(text: str) -> dict[int, int | None]:
    out: dict[int, int | None] = {}
    for part in text.split(","):
        grade, _, budget = part.partition(":")
        out[int(grade)] = None if budget.strip() == "*" else int(budget)
    return out


def _cmd_prune(args) -> int:
    pools = records.load_pools(args.pools)
    fused = _first_runs(args.fused, None)
    budgets = _parse_budgets(args.budgets)
    rows: list[dict] = []
    for query_id in sorted(fused):
        pool = pools.get(query_id)
        if pool is None:
            continue
        run = fusion.RunList(
            query_id,
            "fused",
            [fusion.ScoredDoc(d, 0.0) for d in fused[query_id].ranking],
        )
        candidates = fusion.grade_bucketed_prune(pool, run, budgets)
        for rank, doc_id in enumerate(candidates.doc_ids, start=1):
            rows.append(
                {
                    "query_id": query_id,
                    "doc_id": doc_id,
                    "rank": rank,
                    "provenance": candidates.provenance_label,
                }
            )
    _emit_records(args.out, rows)
    return 0


def _cmd_refine(args, seed: int) -> int:
    pools = records.load_pools(args.pools)
    config = ranker.RankerConfig(iteration_limit=args.iterations, top_n=args.top_n)
    rows: list[dict] = []
    for query_id in sorted(pools):
        pool = pools[query_id]
        weights = metrics.compute_weights(pool)
        utilities = {
            p.doc_id: weights.for_grade(p.grade)
            + (derive_seed(seed, "jitter", query_id, p.doc_id) % 1000) / 1e7
            for p in pool.passages
        }
        judge = SimulatedJudge(
            utilities, noise_scale=args.noise_scale, seed=derive_seed(seed, "judge", query_id)
        )
        rng = np.random.default_rng(derive_seed(seed, "refine", query_id))
        result = ranker.refine(pool, weights, judge, config, rng)
        for rank, doc_id in enumerate(result.top, start=1):
            rows.append(
                {
                    "query_id": query_id,
                    "doc_id": doc_id,
                    "rank": rank,
                    "score": result.scores[doc_id],
                    "system": "refined",
                    "converged": result.converged,
                    "iterations": result.iterations,
                }
            )
    _emit_records(args.out, rows)
    return 0


def _cmd_diagnose(args, seed: int) -> int:
    bundles = records.load_bundles(args.bundles)
    stores = records.load_vectors(args.vectors)
    if args.provider not in stores:
        print(
            f"error: vectors file has no provider {args.provider!r}; available: {sorted(stores)}",
            file=sys.stderr,
        )
        return 2
    provider = margins.RecordedVectorProvider(stores[args.provider], args.provider)
    kinds = (
        [k.strip() for k in args.ablations.split(",") if k.strip()]
        if args.ablations
        else [k for k in probes.ABLATION_KINDS if k != "base"]
    )
    base = {
        qid: margins.margins(margins.embed_bundle(bundles[qid], provider, qid))
        for qid in sorted(bundles)
    }
    rows: list[dict] = []
    for kind in kinds:
        ablated = {}
        for qid in sorted(bundles):
            transformed = probes.apply_ablation(
                bundles[qid], kind, derive_seed(seed, "diagnose", kind, qid)
            )
            ablated[qid] = margins.margins(margins.embed_bundle(transformed, provider, qid))
        summary = margins.delta_delta_percent(base, ablated)
        rows.append(
            {
                "ablation": kind,
                "mean_percent": summary.mean_percent,
                "included": len(summary.percent_by_query),
                "excluded": summary.excluded_queries,
            }
        )
    _emit_records(args.out, rows)
    return 0


def _builtin_cost_tables() -> list[dict]:
    sheet = clq.PriceSheet.default()
    cents = Decimal("0.01")
    rows: list[dict] = []
    for tier in sorted(sheet.rerank_per_1k):
        for k in (50, 100, 150, 200):
            cost = clq.rerank_cost(k, 500, sheet.rerank_per_1k[tier])
            rows.append(
                {
                    "table": "rerank",
                    "tier": tier,
                    "k": k,
                    "cost_per_1k_queries": str(cost.quantize(cents)),
                }
            )
    for tier in sorted(sheet.generator_input_per_1m):
        for k in (10, 20, 30):
            cost = clq.generator_input_cost(k, 500, sheet.generator_input_per_1m[tier])
            rows.append(
                {
                    "table": "generator_input",
                    "tier": tier,
                    "k": k,
                    "cost_per_1k_queries": str(cost.quantize(cents)),
                }
            )
    return rows


def _cmd_clq(args) -> int:
    if args.cost_table:
        _emit_records(args.out, _builtin_cost_tables())
        return 0
    if not args.points:
        print("error: --points is required unless --cost-table is given", file=sys.stderr)
        return 2
    points = records.load_points(args.points)
    frontier_ids = {p.config_id for p in clq.pareto_frontier(points)}
    selected = points
    if args.slo_ms is not None:
        shortlist = clq.select_under_slo(
            points,
            clq.SloConstraints(max_latency_ms=args.slo_ms),
            "latency_bound",
            args.quality_metric,
        )
        if shortlist.diagnostic:
            print(f"note: {shortlist.diagnostic}", file=sys.stderr)
        selected = shortlist.entries
    elif args.budget is not None:
        shortlist = clq.select_under_slo(
            points,
            clq.SloConstraints(max_cost=Decimal(args.budget)),
            "cost_bound",
            args.quality_metric,
        )
        if shortlist.diagnostic:
            print(f"note: {shortlist.diagnostic}", file=sys.stderr)
        selected = shortlist.entries
    if args.frontier_only:
        selected = [p for p in selected if p.config_id in frontier_ids]
    rows = records.point_records(selected)
    for row, point in zip(rows, selected):
        row["frontier"] = point.config_id in frontier_ids
        try:
            row["efficiency"] = point.efficiency()
        except ValueError:
            row["efficiency"] = None
    _emit_records(args.out, rows)
    return 0


def _cmd_pareto(args) -> int:
    points = records.load_points(args.points)
    quality_metrics = [m for m in args.quality_metrics.split(",") if m]
    frontier = clq.pareto_frontier(points, quality_metrics)
    _emit_records(args.out, records.point_records(frontier))
    return 0


def _cmd_run(args) -> int:
    if not args.config:
        print("error: run requires --config", file=sys.stderr)
        return 2
    cfg = load_config(args.config, args.workspace)
    if args.seed:
        cfg.seed = args.seed
    try:
        manifest = run_pipeline(cfg)
    except StageFailure as exc:
        print(f"pipeline halted: {exc}", file=sys.stderr)
        return 1
    print(f"run {manifest.run_id} complete: {len(manifest.stages)} stages in {cfg.run_dir}")
    return 0


def _cmd_report(args) -> int:
    run_dir = Path(args.workspace) / args.run_id
    sections = [s for s in args.sections.split(",") if s] if args.sections else None
    print(render_report(run_dir, args.format, sections))
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "score":
            return _cmd_score(args)
        if args.command == "proc":
            return _cmd_proc(args)
        if args.command == "merge":
            return _cmd_merge(args)
        if args.command == "prune":
            return _cmd_prune(args)
        if args.command == "refine":
            return _cmd_refine(args, args.seed)
        if args.command == "diagnose":
            return _cmd_diagnose(args, args.seed)
        if args.command == "clq":
            return _cmd_clq(args)
        if args.command == "pareto":
            return _cmd_pareto(args)
        if args.command == "report":
            return _cmd_report(args)
    except (records.RecordError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(f"unhandled command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
