"""Operator CLI: serve the gateway, feed ingestion, run scenarios,
query a live gateway, and export model input or reports."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

from .config import parse_config
from .graph import PropertyGraph
from .ingest import (
    export_model_input,
    ingest_config,
    ingest_log_events,
    ingest_roe,
    load_config_document,
    parse_log_text,
)

DEFAULT_SERVER = "http://127.0.0.1:8642"
DEFAULT_SNAPSHOT = "graph.jsonl"


def _load_snapshot(path: str) -> PropertyGraph:
    snapshot = Path(path)
    if snapshot.exists():
        return PropertyGraph.import_jsonl(snapshot.read_text())
    return PropertyGraph()


def _save_snapshot(graph: PropertyGraph, path: str) -> None:
    Path(path).write_text(graph.export_jsonl())


@click.group()
def main() -> None:
    """Knowledge-graph driven intrusion response assistant."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="gateway config file (key = value lines)")
@click.option("--host", default=None, help="listen host override")
@click.option("--port", default=None, type=int, help="listen port override")
def serve(config_path: str | None, host: str | None, port: int | None) -> None:
    """Start the gateway (optionally pre-seeded from a scenario file)."""
    import uvicorn

    from .gateway import create_app

    config = parse_config(config_path)
    if host:
        config.listen_host = host
    if port:
        config.listen_port = port
    app = create_app(config)
    uvicorn.run(app, host=config.listen_host, port=config.listen_port,
                log_level="warning")


@main.command()
@click.argument("kind", type=click.Choice(["logs", "config", "roe"]))
@click.argument("file", type=click.Path(exists=True))
@click.option("--server", default=None, help="post to a running gateway instead")
@click.option("--graph", "graph_path", default=DEFAULT_SNAPSHOT,
              show_default=True, help="graph snapshot to update")
def ingest(kind: str, file: str, server: str | None, graph_path: str) -> None:
    """Ingest a log, config, or ROE file."""
    text = Path(file).read_text()
    if server:
        response = httpx.post(f"{server}/ingest/{kind}", content=text, timeout=60.0)
        if response.status_code >= 400:
            raise click.ClickException(f"{response.status_code}: {response.text}")
        payload = response.json()
    else:
        g = _load_snapshot(graph_path)
        if kind == "logs":
            payload = ingest_log_events(parse_log_text(text), g).to_dict()
        elif kind == "config":
            payload = ingest_config(load_config_document(text), g).to_dict()
        else:
            payload = {"rules": ingest_roe(text, g)}
        _save_snapshot(g, graph_path)
    if kind == "roe":
        click.echo(f"rules loaded: {payload['rules']}")
    else:
        click.echo(json.dumps(payload))


@main.command()
@click.argument("scenario", type=click.Path(exists=True))
@click.option("--out", "out_path", default=None,
              help="write emitted log lines to this file")
@click.option("--graph", "graph_path", default=None,
              help="write the post-run graph snapshot here")
def simulate(scenario: str, out_path: str | None, graph_path: str | None) -> None:
    """Run a scenario file through the simulator and response loop."""
    from .scenario import ScenarioRunner, load_scenario

    spec = load_scenario(scenario)
    runner = ScenarioRunner(spec)
    result = runner.run()
    if out_path:
        Path(out_path).write_text("".join(line + "\n" for line in result.lines))
    if graph_path:
        _save_snapshot(runner.graph, graph_path)
    for report in result.reports:
        executed = ", ".join(
            f"{a.kind}({', '.join(str(p) for p in a.parameters())})"
            for a, ok, _ in report.executed if ok) or "-"
        click.echo(f"cycle {report.cycle}: events={report.monitor['events']} "
                   f"deny={len(report.verdicts)} executed={executed}")
    click.echo(f"lines emitted: {len(result.lines)}, "
               f"verdicts: {len(result.violations)}")


@main.command()
@click.argument("text")
@click.option("--server", default=DEFAULT_SERVER, show_default=True)
@click.option("--session", "session_id", default=None,
              help="reuse an existing session id")
def query(text: str, server: str, session_id: str | None) -> None:
    """Send an analyst query to a running gateway and print the tabs."""
    try:
        if session_id is None:
            created = httpx.post(f"{server}/sessions", timeout=10.0)
            created.raise_for_status()
            session_id = created.json()["session_id"]
        response = httpx.post(f"{server}/sessions/{session_id}/query",
                              json={"text": text}, timeout=120.0)
        response.raise_for_status()
    except httpx.HTTPError as exc:
        raise click.ClickException(f"gateway error: {exc}") from exc
    payload = response.json()
    click.echo(f"session: {session_id}")
    for i, tab in enumerate(payload["tabs"], start=1):
        click.echo(f"\n[tab {i}: {tab['label']}]")
        click.echo(f"summary: {tab['summary']}")
        click.echo(tab["answer"])
        if tab["evidence_refs"]:
            click.echo(f"evidence: {', '.join(tab['evidence_refs'])}")


@main.command("export-model-input")
@click.argument("out", type=click.Path())
@click.option("--graph", "graph_path", default=DEFAULT_SNAPSHOT, show_default=True)
@click.option("--filter", "edge_filter", default=None,
              help="edge label filter (default: the TCP flag set)")
def export_model_input_cmd(out: str, graph_path: str, edge_filter: str | None) -> None:
    """Export count-annotated model input from a graph snapshot."""
    g = _load_snapshot(graph_path)
    text = export_model_input(g, edge_filter) if edge_filter else export_model_input(g)
    Path(out).write_text(text)
    records = len(text.splitlines())
    click.echo(f"wrote {records} records to {out}")


@main.command()
@click.argument("scenario", type=click.Path(exists=True))
@click.option("--out-dir", default="report", show_default=True)
def report(scenario: str, out_dir: str) -> None:
    """Run a scenario and render its report (CSVs + figures)."""
    from .report import generate_report
    from .scenario import ScenarioRunner, load_scenario

    spec = load_scenario(scenario)
    runner = ScenarioRunner(spec)
    result = runner.run()
    files = generate_report(result, runner.topology, out_dir)
    for path in files:
        click.echo(str(path))


if __name__ == "__main__":
    sys.exit(main())
