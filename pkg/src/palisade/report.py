"""
Scenario reporting: delimited (CSV) outputs plus rendered figures for a
completed run, so an analyst can see what the loop observed, decided and
contained without replaying it.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .ingest import parse_log_line
from .scenario import ScenarioResult
from .simulator import Topology


def _ip_to_service(topology: Topology) -> dict[str, str]:
    mapping = {}
    for service in topology.services:
        for component in service.components:
            mapping[component.host_ip] = service.name
    return mapping


def generate_report(result: ScenarioResult, topology: Topology,
                    out_dir: str | Path) -> list[Path]:
    """Write verdict/traffic CSVs and the companion figures; returns the
    list of files created."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created = []
    service_of = _ip_to_service(topology)

    verdicts_csv = out / "verdicts.csv"
    with verdicts_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle", "timestamp", "decision", "subject", "object",
                         "action", "rule_id", "src_ip", "dst_ip"])
        for cycle_no, report in enumerate(result.reports, start=1):
            for v in report.verdicts:
                writer.writerow([cycle_no,
                                 v.event.timestamp.strftime("%Y-%m-%d %H:%M:%S"),
                                 v.decision, v.subject_service, v.object_service,
                                 v.event.flag, v.rule_id,
                                 v.event.src_ip, v.event.dst_ip])
    created.append(verdicts_csv)

    pair_counts: dict[tuple[str, str, str], int] = {}
    for line in result.lines:
        e = parse_log_line(line)
        src = service_of.get(e.src_ip, e.src_ip)
        dst = service_of.get(e.dst_ip, e.dst_ip)
        pair_counts[(src, dst, e.flag)] = pair_counts.get((src, dst, e.flag), 0) + 1
    traffic_csv = out / "traffic.csv"
    with traffic_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["src_service", "dst_service", "flag", "lines"])
        for (src, dst, flag), count in sorted(pair_counts.items()):
            writer.writerow([src, dst, flag, count])
    created.append(traffic_csv)

    actions_csv = out / "actions.csv"
    with actions_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cycle", "kind", "parameters", "rule_id", "ok", "error"])
        for cycle_no, report in enumerate(result.reports, start=1):
            for action, ok, error in report.executed:
                writer.writerow([cycle_no, action.kind,
                                 " -> ".join(str(p) for p in action.parameters()),
                                 action.justification, ok, error])
    created.append(actions_csv)

    created.append(_cycle_figure(result, out / "cycle_activity.png"))
    created.append(_traffic_figure(pair_counts, out / "traffic_pairs.png"))
    return created


def _cycle_figure(result: ScenarioResult, path: Path) -> Path:
    cycles = list(range(1, len(result.reports) + 1))
    events = [r.monitor.get("events", 0) for r in result.reports]
    denies = [len(r.verdicts) for r in result.reports]
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(cycles, events, marker="o", label="monitored events")
    ax.plot(cycles, denies, marker="x", color="firebrick", label="deny verdicts")
    executed_cycles = [c for c, r in zip(cycles, result.reports) if r.executed]
    for c in executed_cycles:
        ax.axvline(c, color="gray", linestyle=":", alpha=0.7)
    if executed_cycles:
        ax.text(executed_cycles[0], max(events) * 0.95, " containment",
                fontsize=8, color="gray")
    ax.set_xlabel("cycle")
    ax.set_ylabel("count")
    ax.set_title("loop activity per cycle")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _traffic_figure(pair_counts: dict[tuple[str, str, str], int], path: Path) -> Path:
    totals: dict[str, int] = {}
    for (src, dst, _flag), count in pair_counts.items():
        key = f"{src} -> {dst}"
        totals[key] = totals.get(key, 0) + count
    pairs = sorted(totals.items(), key=lambda t: t[1])
    labels = [p for p, _ in pairs]
    values = [v for _, v in pairs]
    fig, ax = plt.subplots(figsize=(8, max(3, 0.35 * len(pairs) + 1)))
    ax.barh(labels, values, color="steelblue")
    ax.set_xlabel("log lines")
    ax.set_title("traffic volume by service pair")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
