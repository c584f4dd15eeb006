import json

import pytest
from click.testing import CliRunner

from palisade.cli import main
from palisade.graph import PropertyGraph
from palisade.ingest import FLAG_EDGE_FILTER


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


def test_ingest_roe_prints_rule_count(runner, fixtures_dir, tmp_path):
    snapshot = tmp_path / "graph.jsonl"
    result = runner.invoke(main, ["ingest", "roe", str(fixtures_dir / "roe.jsonl"),
                                  "--graph", str(snapshot)])
    assert result.exit_code == 0, result.output
    assert "rules loaded: 1" in result.output
    assert snapshot.exists()


def test_ingest_logs_updates_snapshot(runner, fixtures_dir, tmp_path):
    snapshot = tmp_path / "graph.jsonl"
    result = runner.invoke(main, ["ingest", "logs",
                                  str(fixtures_dir / "handshake.log"),
                                  "--graph", str(snapshot)])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report == {"vertices": 2, "edges": 4, "duplicates": 0, "events": 4}


def test_export_model_input_satisfies_count_sum(runner, fixtures_dir, tmp_path):
    snapshot = tmp_path / "graph.jsonl"
    out = tmp_path / "model_input.jsonl"
    runner.invoke(main, ["ingest", "logs", str(fixtures_dir / "handshake.log"),
                         "--graph", str(snapshot)])
    result = runner.invoke(main, ["export-model-input", str(out),
                                  "--graph", str(snapshot)])
    assert result.exit_code == 0, result.output
    records = [json.loads(l) for l in out.read_text().splitlines()]
    counts = {r["id"]: r["properties"]["count"]
              for r in records if r["type"] == "node"}
    rels = [r for r in records if r["type"] == "relationship"]
    assert rels
    for rel in rels:
        assert rel["properties"]["count"] == \
            counts[rel["start"]["id"]] + counts[rel["end"]["id"]]


def test_simulate_prints_cycle_summaries(runner, fixtures_dir, tmp_path):
    out = tmp_path / "emitted.log"
    result = runner.invoke(main, ["simulate",
                                  str(fixtures_dir / "breach_scenario.json"),
                                  "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "cycle 1:" in result.output
    assert "block-communication(frontend-service, email-service)" in result.output
    assert "restart-component(C1_1)" in result.output
    assert out.exists() and out.read_text().count("\n") > 100


def test_report_writes_csvs_and_figures(runner, fixtures_dir, tmp_path):
    out_dir = tmp_path / "report"
    result = runner.invoke(main, ["report",
                                  str(fixtures_dir / "breach_scenario.json"),
                                  "--out-dir", str(out_dir)])
    assert result.exit_code == 0, result.output
    names = {p.name for p in out_dir.iterdir()}
    assert {"verdicts.csv", "traffic.csv", "actions.csv",
            "cycle_activity.png", "traffic_pairs.png"} <= names
    verdict_rows = (out_dir / "verdicts.csv").read_text().splitlines()
    assert verdict_rows[0].startswith("cycle,timestamp,decision")
    assert any("frontend-service" in row for row in verdict_rows[1:])
    assert (out_dir / "cycle_activity.png").stat().st_size > 1000


def test_usage_error_exits_2(runner):
    result = runner.invoke(main, ["ingest", "nonsense", "missing.file"])
    assert result.exit_code == 2


def test_query_against_unreachable_server_exits_1(runner):
    result = runner.invoke(main, ["query", "hello",
                                  "--server", "http://127.0.0.1:1"])
    assert result.exit_code == 1
    assert "gateway error" in result.output
