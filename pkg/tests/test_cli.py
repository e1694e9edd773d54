import json
import subprocess
import sys

import pytest

from evograph.cli import run_command
from helpers import FIXTURES, graph_args, run_all_commands

BROKEN = FIXTURES / "broken_quote"


def test_validate_ok(capsys):
    assert run_command(["validate"] + graph_args()) == 0
    assert "0 rejected" in capsys.readouterr().out


def test_validate_broken_quote_names_edge(capsys):
    assert run_command(["validate"] + graph_args(BROKEN)) == 1
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "p_albert -> p_bert (improves)" in err and "quote-mismatch" in err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["lineage"] + graph_args(),  # missing --query
        ["validate"],  # missing graph
        ["lineage", "--query", "x", "--seed", "abc"] + graph_args(),
    ],
)
def test_usage_errors_exit_two(argv, capsys):
    assert run_command(argv) == 2
    assert capsys.readouterr().err.startswith("error:")


def test_domain_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "idea.json"
    bad.write_text("{broken")
    assert run_command(["evaluate"] + graph_args() + ["--idea", str(bad), "--out", str(tmp_path / "r.json")]) == 1
    assert run_command(["validate"] + graph_args(tmp_path)) == 1
    cfg = tmp_path / "c.json"
    cfg.write_text('{"lineage": {"budgett": 3}}')
    assert run_command(["validate", "--config", str(cfg)] + graph_args()) == 1
    for line in capsys.readouterr().err.splitlines():
        assert line.startswith("error:")


def test_method_cycle_reported(tmp_path, capsys):
    nodes = [
        {"id": "pa", "kind": "paper", "year": 2020, "sections": {"method": "q m"}},
        {"id": "pb", "kind": "paper", "year": 2020, "sections": {"method": "q m"}},
        {"id": "ma", "kind": "method", "canonical_name": "Aa", "introduced_by": "pa"},
        {"id": "mb", "kind": "method", "canonical_name": "Bb", "introduced_by": "pb"},
    ]
    evidence = {
        "bottleneck_quote": "q", "bottleneck_description": "d", "bottleneck_dimension": "accuracy",
        "mechanism_quote": "m", "mechanism_description": "md", "confidence": 0.8,
    }
    edges = [
        {"source": "pa", "target": "pb", "type": "extends", "evidence": evidence},
        {"source": "pa", "target": "pb", "type": "uses_component", "evidence": evidence},
    ]
    (tmp_path / "nodes.jsonl").write_text("".join(json.dumps(n) + "\n" for n in nodes))
    (tmp_path / "edges.jsonl").write_text("".join(json.dumps(e) + "\n" for e in edges))
    assert run_command(["validate"] + graph_args(tmp_path)) == 1
    assert "cycle" in capsys.readouterr().err


def test_lineage_artifact(tmp_path):
    out = tmp_path / "chains.jsonl"
    assert run_command(["lineage"] + graph_args() + ["--query", "How did RoBERTa evolve?", "--out", str(out)]) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert rows[0]["nodes"] == ["p_transformer", "p_bert", "p_roberta", "p_deberta"]


def test_lineage_without_match(tmp_path, capsys):
    out = tmp_path / "chains.jsonl"
    assert run_command(["lineage"] + graph_args() + ["--query", "nothing known", "--out", str(out)]) == 0
    assert "no exact match" in capsys.readouterr().out
    assert out.read_text() == ""


def test_evaluate_artifacts(tmp_path):
    out = tmp_path / "r.json"
    assert run_command(["evaluate"] + graph_args() + ["--idea", str(FIXTURES / "idea_unknown.json"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["overall"] == 6.5 and report["fallback_used"] and report["scores"] is None
    assert run_command(
        ["evaluate"] + graph_args() + ["--idea", str(FIXTURES / "idea.json"), "--verdict", str(FIXTURES / "verdict.json"), "--out", str(out)]
    ) == 0
    report = json.loads(out.read_text())
    assert report["adjudicated"] and report["overall"] <= 6.0


def test_all_commands_and_seed_sensitivity(tmp_path):
    a = run_all_commands(tmp_path / "a", seed=3)
    b = run_all_commands(tmp_path / "b", seed=3)
    assert a == b
    assert {"proposal.json", "bench.csv", "synth/nodes.jsonl", "synth/reference.json"} <= set(a)
    c = run_all_commands(tmp_path / "c", seed=4)
    assert c["synth/edges.jsonl"] != a["synth/edges.jsonl"]


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "evograph", "validate"] + graph_args(), capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "evograph", "--version"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.strip()
