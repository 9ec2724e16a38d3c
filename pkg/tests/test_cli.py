"""Command-line surface: each subcommand over the demo fixtures."""

from __future__ import annotations

import json

import pytest

from conftest import FIXTURES
from rageval.cli import main

DEMO = FIXTURES / "workspace_demo"


def run_cli(capsys, *argv: str) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def jsonl(out: str) -> list[dict]:
    return [json.loads(line) for line in out.splitlines() if line.strip()]


def test_merge_then_prune_then_score(tmp_path, capsys):
    fused_path = tmp_path / "fused.jsonl"
    code, _out, _err = run_cli(
        capsys,
        "merge",
        "--runs", str(DEMO / "dense.jsonl"), str(DEMO / "sparse.jsonl"),
        "--out", str(fused_path),
    )
    assert code == 0
    fused_rows = [json.loads(line) for line in fused_path.read_text().splitlines()]
    assert {r["query_id"] for r in fused_rows} == {"q1", "q2", "q3"}

    code, out, _err = run_cli(
        capsys,
        "prune",
        "--pools", str(DEMO / "pools.jsonl"),
        "--fused", str(fused_path),
        "--budgets", "5:*,4:*,3:1,2:0,1:0",
    )
    assert code == 0
    pruned = jsonl(out)
    assert all(r["provenance"].startswith("prune[") for r in pruned)

    code, out, _err = run_cli(
        capsys,
        "score",
        "--pools", str(DEMO / "pools.jsonl"),
        "--run", str(fused_path),
        "--ks", "3,5",
    )
    assert code == 0
    rows = jsonl(out)
    assert {r["k"] for r in rows} == {3, 5}
    assert {r["metric"] for r in rows} == {
        "ra_nwg", "n_recall_4plus", "n_recall_5", "precision_4plus", "harm",
    }


def test_proc_subcommand(tmp_path, capsys):
    fused_path = tmp_path / "fused.jsonl"
    run_cli(
        capsys, "merge",
        "--runs", str(DEMO / "dense.jsonl"), str(DEMO / "sparse.jsonl"),
        "--out", str(fused_path),
    )
    code, out, _err = run_cli(
        capsys,
        "proc",
        "--pools", str(DEMO / "pools.jsonl"),
        "--candidates", str(fused_path),
        "--run", str(DEMO / "dense.jsonl"),
        "--ks", "3",
    )
    assert code == 0
    for row in jsonl(out):
        if row["actual"] is not None and row["ceiling"] is not None:
            assert row["actual"] <= row["ceiling"] + 1e-9


def test_refine_subcommand(capsys):
    code, out, _err = run_cli(
        capsys,
        "--seed", "3",
        "refine",
        "--pools", str(DEMO / "pools.jsonl"),
        "--iterations", "80",
        "--top-n", "4",
    )
    assert code == 0
    rows = jsonl(out)
    assert {r["query_id"] for r in rows} == {"q1", "q2", "q3"}
    assert all(r["system"] == "refined" for r in rows)


def test_diagnose_subcommand(capsys):
    code, out, _err = run_cli(
        capsys,
        "--seed", "7",
        "diagnose",
        "--bundles", str(DEMO / "bundles.jsonl"),
        "--vectors", str(DEMO / "vectors.jsonl"),
        "--provider", "fixture-embed",
        "--ablations", "hard_name_mask",
    )
    assert code == 0
    rows = jsonl(out)
    assert rows[0]["ablation"] == "hard_name_mask"
    assert rows[0]["mean_percent"] == pytest.approx(-100.0, abs=1e-6)


def test_clq_cost_table(capsys):
    code, out, _err = run_cli(capsys, "clq", "--cost-table")
    assert code == 0
    rows = jsonl(out)
    rerank = {
        (r["tier"], r["k"]): r["cost_per_1k_queries"]
        for r in rows if r["table"] == "rerank"
    }
    assert rerank[("rerank-2.5", 50)] == "1.25"
    assert rerank[("rerank-2.5-lite", 200)] == "2.00"
    generator = {
        (r["tier"], r["k"]): r["cost_per_1k_queries"]
        for r in rows if r["table"] == "generator_input"
    }
    assert generator[("gpt-5", 10)] == "6.25"
    assert generator[("gpt-5-nano", 30)] == "0.75"


def test_clq_slo_filter(capsys):
    code, out, _err = run_cli(
        capsys,
        "clq",
        "--points", str(DEMO / "points.jsonl"),
        "--slo-ms", "500",
    )
    assert code == 0
    ids = [r["config_id"] for r in jsonl(out)]
    assert "high_k_check" not in ids
    assert len(ids) == 4


def test_pareto_subcommand(capsys):
    code, out, _err = run_cli(
        capsys, "pareto", "--points", str(DEMO / "points.jsonl")
    )
    assert code == 0
    ids = {r["config_id"] for r in jsonl(out)}
    assert "baseline" in ids
    assert "high_k_check" not in ids  # dominated: dearer, slower, no better


def test_run_and_report(tmp_path, capsys):
    code, out, _err = run_cli(
        capsys,
        "--workspace", str(tmp_path),
        "--config", str(DEMO / "config.json"),
        "run",
    )
    assert code == 0
    assert "run demo complete" in out
    code, out, _err = run_cli(
        capsys, "--workspace", str(tmp_path), "report", "--run-id", "demo",
    )
    assert code == 0
    assert "== metrics ==" in out


def test_error_paths(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"query_id": "q", "doc_id": "a", "grade": 9}\n', encoding="utf-8")
    code, _out, err = run_cli(
        capsys, "score", "--pools", str(bad), "--run", str(DEMO / "dense.jsonl")
    )
    assert code == 2
    assert "grade" in err
    code, _out, err = run_cli(capsys, "run")
    assert code == 2
    assert "--config" in err
