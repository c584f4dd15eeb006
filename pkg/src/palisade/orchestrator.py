"""
Agent orchestration:

* a brain task routes each analyst query through partition-scoped agents
  (executor role), groups their per-template answers into a tabbed
  answer set (synthesizer role), and logs the whole trace (logger role);
* a monitor/analyze/plan/execute loop over the shared graph turns ROE
  violations into containment commands and writes verdicts, compromise
  markers and executed actions back into the graph as audit vertices.
"""

from __future__ import annotations

import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass, field
from typing import Callable, Protocol

from .graph import PropertyGraph
from .ingest import LogEvent, ingest_log_events, parse_log_line
from .llm import (
    TASK_QA,
    Answer,
    TemplateRegistry,
    instantiate_template,
    llm_complete,
    summarize,
)
from .retrieval import BackendUnavailable, Chunk, EmptyIndex, RetrievalService
from .rules import RoeRule, Verdict, explain_rule, find_violations, load_rules

ROLE_BRAIN = "brain"
ROLE_EXECUTOR = "executor"
ROLE_SYNTHESIZER = "synthesizer"
ROLE_LOGGER = "logger"
ROLE_PARTITION_AGENT = "partition-agent"

ACTION_BLOCK = "block-communication"
ACTION_RESTART = "restart-component"

DEFAULT_AGENT_TIMEOUT = 60.0


class NoAgentsConfigured(RuntimeError):
    """Query dispatch requires at least one partition agent."""


class ExecuteFailure(RuntimeError):
    """A containment command was rejected by the control interface."""


class ControlInterface(Protocol):
    """Narrow command contract toward the enforcement point."""

    def block(self, subject_service: str, object_service: str) -> bool: ...

    def restart(self, component_name: str) -> bool: ...


#: Optional hook for computational response models; ships inert (None).
AdviceProvider = Callable[[list[Verdict]], list["ResponseAction"]]


@dataclass(frozen=True)
class AgentDescriptor:
    agent_id: str
    role: str
    scope: str | None = None


def validate_agents(descriptors: list[AgentDescriptor]) -> None:
    brains = [d for d in descriptors if d.role == ROLE_BRAIN]
    if len(brains) != 1:
        raise ValueError(f"exactly one brain agent required, got {len(brains)}")
    scopes = [d.scope for d in descriptors if d.role == ROLE_PARTITION_AGENT]
    if any(s is None for s in scopes):
        raise ValueError("partition agents need a scope")
    if len(set(scopes)) != len(scopes):
        raise ValueError("partition agent scopes must be distinct")


@dataclass
class Tab:
    label: str
    summary: str
    answer: str
    evidence_refs: list[str]
    template_id: str

    def to_dict(self) -> dict:
        return {"label": self.label, "summary": self.summary,
                "answer": self.answer, "evidence_refs": list(self.evidence_refs),
                "template_id": self.template_id}


@dataclass
class TabbedAnswerSet:
    tabs: list[Tab]

    def to_payload(self) -> dict:
        return {"tabs": [t.to_dict() for t in self.tabs]}


@dataclass
class SessionState:
    session_id: str
    history: list[tuple[str, TabbedAnswerSet]] = field(default_factory=list)
    context: dict[str, str] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


@dataclass(frozen=True)
class ResponseAction:
    kind: str
    subject: str | None = None
    object: str | None = None
    component: str | None = None
    justification: str | None = None

    def parameters(self) -> tuple:
        if self.kind == ACTION_BLOCK:
            return (self.subject, self.object)
        return (self.component,)

    def to_dict(self) -> dict:
        payload = {"kind": self.kind, "justification": self.justification}
        if self.kind == ACTION_BLOCK:
            payload.update(subject=self.subject, object=self.object)
        else:
            payload["component"] = self.component
        return payload


@dataclass
class AgentResult:
    partition: str | None
    template_id: str
    answer_text: str
    evidence: list[Chunk] = field(default_factory=list)


@dataclass
class CycleReport:
    cycle: int
    monitor: dict
    verdicts: list[Verdict]
    plan: list[ResponseAction]
    executed: list[tuple[ResponseAction, bool, str]]
    audit_vertex_ids: list[str]

    def to_dict(self) -> dict:
        return {
            "cycle": self.cycle,
            "monitor": self.monitor,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "plan": [a.to_dict() for a in self.plan],
            "executed": [{"action": a.to_dict(), "ok": ok, "error": err}
                         for a, ok, err in self.executed],
            "audit_vertex_ids": list(self.audit_vertex_ids),
        }


class AuditLogger:
    """Fire-and-acknowledge trace log. Records always land in the
    in-memory buffer synchronously; an optional file sink is fed from a
    background thread so a slow or broken sink never delays the query
    path. Sequence numbers increase monotonically per session."""

    def __init__(self, sink_path: str | None = None):
        self.records: list[dict] = []
        self.degraded = False
        self._sequences: dict[str, int] = {}
        self._lock = threading.Lock()
        self._queue: queue.Queue | None = None
        self._sink_path = sink_path
        if sink_path:
            self._queue = queue.Queue()
            threading.Thread(target=self._drain, daemon=True).start()

    def log(self, session_id: str, kind: str, **payload) -> int:
        with self._lock:
            seq = self._sequences.get(session_id, 0) + 1
            self._sequences[session_id] = seq
            record = {"seq": seq, "session": session_id, "kind": kind, **payload}
            self.records.append(record)
        if self._queue is not None:
            self._queue.put(record)
        return seq

    def flush(self) -> None:
        """Wait for queued sink writes; test hook, never used on the query path."""
        if self._queue is not None:
            self._queue.join()

    def _drain(self) -> None:
        import json

        while True:
            record = self._queue.get()
            try:
                with open(self._sink_path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")
            except OSError:
                self.degraded = True
            finally:
                self._queue.task_done()

    def session_records(self, session_id: str) -> list[dict]:
        with self._lock:
            return [r for r in self.records if r["session"] == session_id]


def plan_response(violations: list[Verdict], g: PropertyGraph) -> list[ResponseAction]:
    """Containment plan: one block per distinct denied (subject, object)
    pair, one restart per distinct compromised component (the component
    whose host emitted a denied event). Blocks first, ordered by name."""
    blocks: dict[tuple[str, str], str] = {}
    restarts: dict[str, str] = {}
    for verdict in violations:
        if verdict.decision != "deny":
            continue
        pair = (verdict.subject_service or "", verdict.object_service or "")
        blocks.setdefault(pair, verdict.rule_id or "")
        component = _component_for_ip(g, verdict.event.src_ip)
        if component is not None:
            restarts.setdefault(component, verdict.rule_id or "")
    plan = [ResponseAction(ACTION_BLOCK, subject=s, object=o, justification=rule)
            for (s, o), rule in sorted(blocks.items())]
    plan += [ResponseAction(ACTION_RESTART, component=c, justification=rule)
             for c, rule in sorted(restarts.items())]
    return plan


def _component_for_ip(g: PropertyGraph, ip: str) -> str | None:
    for host_id in g.find_vertices(predicate={"ip": ip}):
        for edge in g.in_edges(host_id):
            if edge.label == "runs":
                name = g.vertex(edge.start).properties.get("name")
                if isinstance(name, str):
                    return name
    return None


def _partition_of_service(g: PropertyGraph, service: str | None) -> str | None:
    if not service:
        return None
    for vid in g.find_vertices(predicate={"service_name": service}):
        vertex = g.vertex(vid)
        if "name" in vertex.properties and "type" in vertex.properties:
            return str(vertex.properties["name"])
    return None


class Orchestrator:
    """The agentic brain plus its executor/synthesizer/logger sub-agents
    and the partition agents derived from the graph."""

    def __init__(
        self,
        graph: PropertyGraph,
        retrieval: RetrievalService,
        registry: TemplateRegistry,
        adapter,
        control: ControlInterface | None = None,
        retrieval_k: int = 5,
        agent_timeout: float = DEFAULT_AGENT_TIMEOUT,
        audit_sink: str | None = None,
        advice_provider: AdviceProvider | None = None,
    ):
        self.graph = graph
        self.retrieval = retrieval
        self.registry = registry
        self.adapter = adapter
        self.control = control
        self.retrieval_k = retrieval_k
        self.agent_timeout = agent_timeout
        self.advice_provider = advice_provider  # inert unless configured
        self.audit = AuditLogger(audit_sink)
        self.verdict_log: list[Verdict] = []
        self.rules: list[RoeRule] = []
        self._cycle_lock = threading.Lock()
        self._cycles = 0
        self._sessions = 0
        self.refresh()

    # -- wiring -------------------------------------------------------------

    def refresh(self) -> None:
        """Recompute the retrieval index, the rule set and the agent roster."""
        self.retrieval.refresh()
        with self.graph.lock.read():
            self.rules = load_rules(self.graph)
        partitions = self.retrieval.partitions()
        agents = [AgentDescriptor("ab", ROLE_BRAIN),
                  AgentDescriptor("aa1", ROLE_EXECUTOR),
                  AgentDescriptor("aa2", ROLE_SYNTHESIZER),
                  AgentDescriptor("aa3", ROLE_LOGGER)]
        if partitions:
            agents += [AgentDescriptor(f"pa-{p}", ROLE_PARTITION_AGENT, scope=p)
                       for p in partitions]
        validate_agents(agents)
        self.agents = agents

    @property
    def partition_agents(self) -> list[AgentDescriptor]:
        return [a for a in self.agents if a.role == ROLE_PARTITION_AGENT]

    def create_session(self, session_id: str | None = None) -> SessionState:
        self._sessions += 1
        return SessionState(session_id or f"session-{self._sessions}")

    # -- query path -----------------------------------------------------------

    def dispatch_query(self, session: SessionState, query: str) -> TabbedAnswerSet:
        """Brain flow: delegate to partition agents, synthesize tabs,
        append to session history. Failed agents degrade to a
        diagnostics tab instead of failing the query."""
        agents = self.partition_agents
        if not agents:
            # a graph without partitions still answers, through one unscoped agent
            agents = [AgentDescriptor("pa-default", ROLE_PARTITION_AGENT, scope=None)]
        with session.lock:
            self.audit.log(session.session_id, "dispatch", query=query)
            results, failures = self._run_agents(agents, query)
            self.audit.log(session.session_id, "executor",
                           results=len(results), failures=len(failures))
            tabs, tab_failures = self._synthesize(results)
            failures += tab_failures
            self.audit.log(session.session_id, "synthesizer", tabs=len(tabs))
            if failures:
                tabs.append(Tab(
                    label="diagnostics",
                    summary=f"{len(failures)} agent task(s) failed",
                    answer="\n".join(failures),
                    evidence_refs=[],
                    template_id="diagnostics",
                ))
            if not tabs:
                tabs = [Tab(
                    label="no-evidence",
                    summary="no evidence retrieved",
                    answer=f"no evidence retrieved for: {query}",
                    evidence_refs=[],
                    template_id="no-evidence",
                )]
            answer_set = TabbedAnswerSet(tabs)
            session.history.append((query, answer_set))
            self.audit.log(session.session_id, "assembly", tabs=len(tabs))
            return answer_set

    def run_partition_agents(self, query: str) -> list[AgentResult]:
        results, _ = self._run_agents(self.partition_agents, query)
        return results

    def _run_agents(self, agents: list[AgentDescriptor],
                    query: str) -> tuple[list[AgentResult], list[str]]:
        if not agents:
            raise NoAgentsConfigured("no partition agents available")
        results: list[AgentResult] = []
        failures: list[str] = []
        with ThreadPoolExecutor(max_workers=min(8, len(agents))) as pool:
            futures = [(agent, pool.submit(self._agent_task, agent, query))
                       for agent in agents]
            for agent, future in futures:  # join barrier, agent order
                try:
                    results.extend(future.result(timeout=self.agent_timeout))
                except FutureTimeout:
                    failures.append(f"{agent.agent_id}: timed out")
                except BackendUnavailable:
                    raise  # a dead backend is not a per-agent failure
                except Exception as exc:  # recorded, not fatal
                    failures.append(f"{agent.agent_id}: {exc}")
        return results, failures

    def _agent_task(self, agent: AgentDescriptor, query: str) -> list[AgentResult]:
        try:
            hits = self.retrieval.search(query, self.retrieval_k,
                                         partition_tag=agent.scope)
        except EmptyIndex:
            return []
        evidence = [chunk for chunk, score in hits if score > 0.0]
        if not evidence:
            return []
        results = []
        for template in self.registry.question_templates():
            prompt = instantiate_template(template, query, evidence, self.registry)
            text = llm_complete(self.adapter, prompt, TASK_QA)
            results.append(AgentResult(
                partition=agent.scope,
                template_id=template.template_id,
                answer_text=text,
                evidence=list(evidence),
            ))
        return results

    def synthesize(self, results: list[AgentResult]) -> TabbedAnswerSet:
        tabs, _ = self._synthesize(results)
        return TabbedAnswerSet(tabs)

    def _synthesize(self, results: list[AgentResult]) -> tuple[list[Tab], list[str]]:
        """Group per-agent answers by template, summarize each group, and
        order tabs by template registration order."""
        tabs: list[Tab] = []
        failures: list[str] = []
        for template in self.registry.question_templates():
            group = [r for r in results
                     if r.template_id == template.template_id and r.answer_text]
            if not group:
                continue
            merged_text = "\n".join(r.answer_text for r in group)
            evidence_refs: list[str] = []
            for result in group:
                for chunk in result.evidence:
                    if chunk.chunk_id not in evidence_refs:
                        evidence_refs.append(chunk.chunk_id)
            answer = Answer(
                answer_id=f"{template.template_id}-{len(tabs) + 1}",
                template_id=template.template_id,
                text=merged_text,
                evidence_refs=list(evidence_refs),
            )
            try:
                summary = summarize(answer, self.retrieval, self.registry,
                                    self.adapter, self.retrieval_k)
            except BackendUnavailable:
                raise
            except Exception as exc:
                failures.append(f"summarization[{template.template_id}]: {exc}")
                continue
            tabs.append(Tab(
                label=template.strategy,
                summary=summary,
                answer=answer.text,
                evidence_refs=evidence_refs,
                template_id=template.template_id,
            ))
        return tabs, failures

    # -- MAPE-K loop -------------------------------------------------------------

    def mape_k_cycle(self, event_stream: list[str] | list[LogEvent]) -> CycleReport:
        """One monitor/analyze/plan/execute pass over new events, with the
        knowledge write-back that makes the loop auditable."""
        with self._cycle_lock:
            self._cycles += 1
            events = [parse_log_line(e) if isinstance(e, str) else e
                      for e in event_stream]
            with self.graph.lock.write():
                monitor_report = ingest_log_events(events, self.graph)
                self.rules = load_rules(self.graph)
            with self.graph.lock.read():
                violations = find_violations(events, self.rules, self.graph)
                plan = plan_response(violations, self.graph)
            self.verdict_log.extend(violations)
            if self.advice_provider is not None:
                plan = list(plan) + [a for a in self.advice_provider(violations)
                                     if a not in plan]

            executed: list[tuple[ResponseAction, bool, str]] = []
            if self.control is not None:
                for action in plan:
                    try:
                        if action.kind == ACTION_BLOCK:
                            ok = self.control.block(action.subject, action.object)
                        else:
                            ok = self.control.restart(action.component)
                        executed.append((action, bool(ok), ""))
                    except Exception as exc:  # ExecuteFailure: recorded, cycle continues
                        executed.append((action, False, str(exc)))

            audit_ids = self._write_knowledge(violations, executed)
            self.refresh()
            report = CycleReport(self._cycles, monitor_report.to_dict(),
                                 violations, plan, executed, audit_ids)
            self.audit.log("-", "cycle", cycle=self._cycles,
                           verdicts=len(violations), planned=len(plan),
                           executed=len(executed))
            return report

    def _write_knowledge(self, violations: list[Verdict],
                         executed: list[tuple[ResponseAction, bool, str]]) -> list[str]:
        """Write verdict alerts, compromise markers and action outcomes
        into the graph so later queries can retrieve them as evidence."""
        created: list[str] = []
        with self.graph.lock.write():
            for verdict in violations:
                key = {"subject": verdict.subject_service or "",
                       "object": verdict.object_service or "",
                       "action": verdict.event.flag,
                       "rule_id": verdict.rule_id or ""}
                existing = self.graph.find_vertices(label="verdict", predicate=key)
                if existing:
                    vertex = self.graph.vertex(existing[0])
                    vertex.properties["occurrences"] = \
                        int(vertex.properties.get("occurrences", 1)) + 1
                    continue
                partition = _partition_of_service(self.graph, verdict.subject_service)
                records = explain_rule(verdict.rule_id, self.graph).records \
                    if verdict.rule_id else []
                props = {
                    **key,
                    "decision": verdict.decision,
                    "src_ip": verdict.event.src_ip,
                    "dst_ip": verdict.event.dst_ip,
                    "first_time": verdict.event.timestamp.strftime("%Y-%m-%d %H:%M:%S"),
                    "occurrences": 1,
                    "summary": (f"active breach: {key['subject']} denied "
                                f"{key['action']} to {key['object']} "
                                f"(rule {key['rule_id']})"),
                }
                if partition:
                    props["partition"] = partition
                if records:
                    props["rule_records"] = "\n".join(records)
                vid = self.graph.add_vertex(["verdict"], props)
                created.append(vid)

                component = _component_for_ip(self.graph, verdict.event.src_ip)
                if component:
                    comp_key = {"component": component}
                    if not self.graph.find_vertices(label="compromise",
                                                    predicate=comp_key):
                        comp_props = {
                            "component": component,
                            "service": key["subject"],
                            "rule_id": key["rule_id"],
                            "summary": (f"{key['subject']} is compromised: component "
                                        f"{component} is the subject of active deny "
                                        f"verdicts (breach in progress)"),
                        }
                        if partition:
                            comp_props["partition"] = partition
                        created.append(self.graph.add_vertex(["compromise"], comp_props))

            for action, ok, error in executed:
                partition = _partition_of_service(self.graph, action.subject)
                props = {
                    "kind": action.kind,
                    "outcome": "success" if ok else "failure",
                    "rule_id": action.justification or "",
                    "summary": self._action_summary(action, ok),
                }
                if action.kind == ACTION_BLOCK:
                    props.update(subject=action.subject or "",
                                 object=action.object or "")
                else:
                    props["component"] = action.component or ""
                if partition:
                    props["partition"] = partition
                if error:
                    props["error"] = error
                vid = self.graph.add_vertex(["action"], props)
                created.append(vid)
                rule_edge = self._rule_subject_vertex(action.justification)
                if rule_edge is not None:
                    self.graph.add_edge(vid, rule_edge, "justified_by",
                                        {"rule_id": action.justification or ""})
        return created

    def _action_summary(self, action: ResponseAction, ok: bool) -> str:
        outcome = "applied" if ok else "failed"
        if action.kind == ACTION_BLOCK:
            return (f"containment {outcome}: blocked {action.subject} "
                    f"to {action.object}")
        return f"restoration {outcome}: restarted component {action.component}"

    def _rule_subject_vertex(self, rule_id: str | None) -> str | None:
        if not rule_id:
            return None
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule.source_vertices[0]
        return None
