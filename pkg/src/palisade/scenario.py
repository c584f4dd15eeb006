"""
Scenario wiring: build a simulated enterprise, seed the knowledge graph
from it (ROE first so policy record ids survive verbatim, then the
derived enterprise configuration, then any extra config documents), and
drive monitor/analyze/plan/execute cycles over the emitted log stream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .graph import PropertyGraph
from .ingest import ingest_config, ingest_roe
from .llm import StubLlm, TemplateRegistry, default_registry
from .orchestrator import CycleReport, Orchestrator
from .retrieval import RetrievalService
from .simulator import BreachScript, EnterpriseSimulator, Topology


@dataclass
class ScenarioSpec:
    topology: dict
    config: dict | None = None
    roe: str | None = None
    breach: dict | None = None
    steps: int = 20
    cycle_every: int = 1
    contain: bool = True


@dataclass
class ScenarioResult:
    lines: list[str] = field(default_factory=list)
    reports: list[CycleReport] = field(default_factory=list)

    @property
    def violations(self):
        return [v for report in self.reports for v in report.verdicts]


def _load_ref(base: Path, value, parser):
    """Scenario entries may be inline values or file references."""
    if value is None:
        return None
    if isinstance(value, str):
        return parser((base / value).read_text())
    return value


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    raw = json.loads(path.read_text())
    base = path.parent
    return ScenarioSpec(
        topology=_load_ref(base, raw["topology"], json.loads),
        config=_load_ref(base, raw.get("config"), json.loads),
        roe=_load_ref(base, raw.get("roe"), str),
        breach=_load_ref(base, raw.get("breach"), json.loads),
        steps=int(raw.get("steps", 20)),
        cycle_every=int(raw.get("cycle_every", 1)),
        contain=bool(raw.get("contain", True)),
    )


def enterprise_config_from_topology(topology: Topology) -> dict:
    """The configuration document implied by a topology: one declaration
    per service and one partition per service with host-bound components."""
    doc: dict = {"partitions": {}}
    for service in topology.services:
        doc[f"{service.name}s"] = {"type": "image"}
        doc["partitions"][service.partition] = {
            "component-type": "container",
            "service_name": service.name,
            "components": [{"name": c.name, "host": c.host_ip}
                           for c in service.components],
        }
    return doc


class ScenarioRunner:
    """Owns the simulator, the graph and the orchestrator for one scenario."""

    def __init__(self, spec: ScenarioSpec,
                 registry: TemplateRegistry | None = None,
                 adapter=None,
                 retrieval_k: int = 5,
                 embedding_dim: int = 256,
                 audit_sink: str | None = None):
        self.spec = spec
        self.topology = Topology.from_dict(spec.topology)
        self.simulator = EnterpriseSimulator(self.topology)
        self.graph = PropertyGraph()
        if spec.roe:
            ingest_roe(spec.roe, self.graph)
        ingest_config(enterprise_config_from_topology(self.topology), self.graph)
        if spec.config:
            ingest_config(spec.config, self.graph)
        self.retrieval = RetrievalService(self.graph, dimensions=embedding_dim)
        self.orchestrator = Orchestrator(
            graph=self.graph,
            retrieval=self.retrieval,
            registry=registry or default_registry(),
            adapter=adapter if adapter is not None else StubLlm(),
            control=self.simulator if spec.contain else None,
            retrieval_k=retrieval_k,
            audit_sink=audit_sink,
        )
        if spec.breach:
            self.simulator.inject_breach(BreachScript.from_dict(spec.breach))

    def run(self) -> ScenarioResult:
        """Step the simulator, cycling the response loop every
        `cycle_every` steps over the freshly emitted lines."""
        result = ScenarioResult()
        remaining = self.spec.steps
        while remaining > 0:
            batch = min(self.spec.cycle_every, remaining)
            lines = self.simulator.run_steps(batch)
            result.lines.extend(lines)
            result.reports.append(self.orchestrator.mape_k_cycle(lines))
            remaining -= batch
        return result
