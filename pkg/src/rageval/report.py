"""Render a run's outputs as aligned text tables, CSV, or JSON.

Sections: metrics (macro-averaged with valid-query counts), proc
(actual / ceiling / realized triples), clq (scenario matrix), and
diagnostics (ablation percent summaries). Sections whose stage output
is missing are omitted with a notice rather than failing the report.
"""

from __future__ import annotations

import io
import json
from pathlib import Path

from rageval import metrics
from rageval.manifest import WorkspaceManifest, load_manifest
from rageval.records import canonical_dumps, read_raw

SECTIONS = ("metrics", "proc", "clq", "diagnostics")
FORMATS = ("table", "csv", "json")


def _fmt(value, digits: int = 3) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _text_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def render(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    lines = [render(headers), render(["-" * w for w in widths])]
    lines.extend(render(row) for row in rows)
    return "\n".join(lines)


def _csv_table(headers: list[str], rows: list[list[str]]) -> str:
    import csv

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(headers)
    writer.writerows(rows)
    return buf.getvalue().rstrip("\n")


def _metrics_section(run_dir: Path) -> tuple[list[str], list[list[str]]] | None:
    path = run_dir / "metrics.jsonl"
    if not path.exists():
        return None
    aggregated = metrics.STANDARD_METRICS + ("hit",)
    rows = [
        metrics.QueryMetricRow(r["query_id"], r["metric"], r["k"], r["value"])
        for _line, r in read_raw(path)
        if r["metric"] in aggregated
    ]
    summary = metrics.macro_aggregate(rows)
    table_rows = [
        [name, str(k), _fmt(s.mean), str(s.valid_count)]
        for (name, k), s in sorted(summary.items(), key=lambda item: (item[0][1], item[0][0]))
    ]
    if (run_dir / "manifest.jsonl").exists():
        manifest = load_manifest(run_dir)
        score_stage = manifest.stage_by_name("score")
        if score_stage and "acc_given_hit" in score_stage.details:
            hit_counts = {
                k: sum(1 for r in rows if r.metric == "hit" and r.k == k and r.value)
                for k in {r.k for r in rows}
            }
            for k, value in sorted(score_stage.details["acc_given_hit"].items()):
                table_rows.append(
                    ["acc_given_hit", str(k), _fmt(value), str(hit_counts.get(int(k), 0))]
                )
    return ["metric", "k", "macro_mean", "valid_queries"], table_rows


def _proc_section(run_dir: Path) -> tuple[list[str], list[list[str]]] | None:
    path = run_dir / "proc.jsonl"
    if not path.exists():
        return None
    grouped: dict[tuple[str, int], dict[str, list[float]]] = {}
    for _line, r in read_raw(path):
        cell = grouped.setdefault((r["metric"], r["k"]), {"actual": [], "ceiling": []})
        if r["actual"] is not None:
            cell["actual"].append(r["actual"])
        if r["ceiling"] is not None:
            cell["ceiling"].append(r["ceiling"])
    table_rows = []
    for (name, k), cell in sorted(grouped.items(), key=lambda item: (item[0][1], item[0][0])):
        actual = sum(cell["actual"]) / len(cell["actual"]) if cell["actual"] else None
        ceiling = sum(cell["ceiling"]) / len(cell["ceiling"]) if cell["ceiling"] else None
        realized = (
            actual / ceiling if actual is not None and ceiling not in (None, 0) else None
        )
        table_rows.append(
            [
                name,
                str(k),
                _fmt(actual),
                _fmt(ceiling),
                _fmt(realized * 100, 1) + "%" if realized is not None else "NA",
            ]
        )
    return ["metric", "k", "actual", "ceiling", "realized"], table_rows


def _clq_section(run_dir: Path) -> tuple[list[str], list[list[str]]] | None:
    path = run_dir / "clq.json"
    if not path.exists():
        return None
    payload = json.loads(path.read_text(encoding="utf-8"))
    frontier = set(payload.get("frontier", []))
    jitter = payload.get("jitter", {})
    rows = []
    for record in payload.get("points", []):
        quality = record.get("quality", {})
        rows.append(
            [
                record["config_id"],
                str(record.get("k", "")),
                record["cost_per_1k_queries"],
                _fmt(record.get("latency_p50"), 1),
                _fmt(quality.get("n_recall_4plus@10")),
                _fmt(quality.get("ra_nwg@10")),
                _fmt(quality.get("ra_nwg@30")),
                _fmt(record.get("efficiency")),
                "yes" if record["config_id"] in frontier else "no",
                "~" if jitter.get(record["config_id"]) else "",
            ]
        )
    headers = [
        "config", "k", "cost/1k", "p50_ms", "n_recall_4plus@10",
        "ra_nwg@10", "ra_nwg@30", "efficiency", "frontier", "jitter",
    ]
    return headers, rows


def _diagnostics_section(run_dir: Path) -> tuple[list[str], list[list[str]]] | None:
    path = run_dir / "diagnostics.jsonl"
    if not path.exists():
        return None
    rows = []
    for _line, r in read_raw(path):
        if r.get("kind") != "summary":
            continue
        rows.append(
            [
                r["ablation"],
                _fmt(r["mean_percent"], 1) + ("%" if r["mean_percent"] is not None else ""),
                str(r["included"]),
                str(len(r["excluded"])),
            ]
        )
    return ["ablation", "mean_delta_delta_name", "included_queries", "excluded"], rows


_SECTION_BUILDERS = {
    "metrics": _metrics_section,
    "proc": _proc_section,
    "clq": _clq_section,
    "diagnostics": _diagnostics_section,
}


def render_report(
    run_dir: str | Path,
    fmt: str = "table",
    sections: list[str] | None = None,
) -> str:
    """Build the report for one run directory; returns the rendered text."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    run_dir = Path(run_dir)
    manifest: WorkspaceManifest | None = None
    if (run_dir / "manifest.jsonl").exists():
        manifest = load_manifest(run_dir)
    wanted = sections or list(SECTIONS)
    unknown = [s for s in wanted if s not in SECTIONS]
    if unknown:
        raise ValueError(f"unknown sections {unknown}; choose from {SECTIONS}")

    if fmt == "json":
        payload: dict = {}
        if manifest is not None:
            payload["run_id"] = manifest.run_id
            payload["status"] = manifest.status
        for section in wanted:
            built = _SECTION_BUILDERS[section](run_dir)
            if built is None:
                payload[section] = None
                continue
            headers, rows = built
            payload[section] = [dict(zip(headers, row)) for row in rows]
        return canonical_dumps(payload)

    parts: list[str] = []
    if manifest is not None:
        parts.append(f"run {manifest.run_id} [{manifest.status}]")
    for section in wanted:
        built = _SECTION_BUILDERS[section](run_dir)
        title = f"== {section} =="
        if built is None:
            parts.append(f"{title}\n[section omitted: no {section} output in this run]")
            continue
        headers, rows = built
        body = _text_table(headers, rows) if fmt == "table" else _csv_table(headers, rows)
        parts.append(f"{title}\n{body}")
    return "\n\n".join(parts)
