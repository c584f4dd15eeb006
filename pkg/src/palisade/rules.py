"""
Rules-of-engagement evaluation: load constraint rules from the graph,
resolve observed addresses to services, and produce allow/deny verdicts
with rule citations an analyst can audit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .graph import (
    PropertyGraph,
    _id_sort_key,
    render_node_record,
    render_relationship_record,
)
from .ingest import LogEvent

DECISION_ALLOW = "allow"
DECISION_DENY = "deny"
DECISION_NO_RULE = "no-rule"


class TemplateViolation(ValueError):
    """A stored rule does not conform to the active rule template."""

    def __init__(self, rule_id: str, reason: str):
        self.rule_id = rule_id
        self.reason = reason
        super().__init__(f"rule {rule_id}: {reason}")


class UnknownRule(KeyError):
    """No rule with the requested id is loaded."""


class AmbiguousBinding(ValueError):
    """One address resolved to more than one service."""


@dataclass(frozen=True)
class RuleTemplate:
    """Shape every stored rule must follow: one edge between two service vertices."""

    template_id: str
    required_properties: tuple[str, ...] = ("action", "constraint")
    edge_label: str | None = None  # None accepts any label
    system_kind: str = "web-enterprise"


DEFAULT_RULE_TEMPLATE = RuleTemplate(template_id="service-communication-v1")


@dataclass(frozen=True)
class RoeRule:
    rule_id: str
    subject_service: str
    object_service: str
    action: str
    constraint: str
    source_vertices: tuple[str, str]
    edge_id: str


@dataclass
class Verdict:
    decision: str
    rule_id: str | None
    event: LogEvent
    subject_service: str | None
    object_service: str | None

    def to_dict(self) -> dict:
        return {
            "decision": self.decision,
            "rule_id": self.rule_id,
            "timestamp": self.event.timestamp.strftime("%Y-%m-%d %H:%M:%S"),
            "src_ip": self.event.src_ip,
            "dst_ip": self.event.dst_ip,
            "subject": self.subject_service,
            "object": self.object_service,
            "action": self.event.flag,
        }


@dataclass
class RuleExplanation:
    rule_id: str
    records: list[str] = field(default_factory=list)
    sentence: str = ""


def load_rules(g: PropertyGraph,
               template: RuleTemplate = DEFAULT_RULE_TEMPLATE) -> list[RoeRule]:
    """One rule per constraint-bearing edge, validated and ordered by rule id."""
    rules = []
    for edge in g.edges():
        if "constraint" not in edge.properties:
            continue
        rule_id = str(edge.properties.get("id", f"edge-{edge.id}"))
        if template.edge_label is not None and edge.label != template.edge_label:
            raise TemplateViolation(rule_id,
                                    f"edge label {edge.label!r} not permitted")
        for prop in template.required_properties:
            if prop not in edge.properties:
                raise TemplateViolation(rule_id, f"missing property {prop!r}")
        constraint = edge.properties["constraint"]
        if constraint not in (DECISION_ALLOW, DECISION_DENY):
            raise TemplateViolation(rule_id, f"constraint {constraint!r} invalid")
        subject = g.vertex(edge.start).properties.get("service_name")
        target = g.vertex(edge.end).properties.get("service_name")
        if not isinstance(subject, str) or not isinstance(target, str):
            raise TemplateViolation(rule_id, "endpoint is missing service_name")
        if subject == target:
            raise TemplateViolation(rule_id, "subject and object service are equal")
        rules.append(RoeRule(
            rule_id=rule_id,
            subject_service=subject,
            object_service=target,
            action=str(edge.properties["action"]),
            constraint=constraint,
            source_vertices=(edge.start, edge.end),
            edge_id=edge.id,
        ))
    rules.sort(key=lambda r: r.rule_id)
    return rules


def resolve_service(ip: str, g: PropertyGraph) -> str | None:
    """Map an address to its service via host <- runs - component - member_of -> partition."""
    services = set()
    for host_id in g.find_vertices(predicate={"ip": ip}):
        for runs in g.in_edges(host_id):
            if runs.label != "runs":
                continue
            for member in g.out_edges(runs.start):
                if member.label != "member_of":
                    continue
                service = g.vertex(member.end).properties.get("service_name")
                if isinstance(service, str):
                    services.add(service)
    if len(services) > 1:
        raise AmbiguousBinding(f"{ip} resolves to {sorted(services)}")
    return services.pop() if services else None


def evaluate_event(event: LogEvent, rules: Iterable[RoeRule],
                   g: PropertyGraph) -> Verdict:
    """Decide one event: the first rule (lowest rule id) matching the
    resolved (subject, object, action) triple wins; otherwise no-rule."""
    subject = resolve_service(event.src_ip, g)
    target = resolve_service(event.dst_ip, g)
    if subject is None or target is None:
        return Verdict(DECISION_NO_RULE, None, event, subject, target)
    for rule in sorted(rules, key=lambda r: r.rule_id):
        if (rule.subject_service == subject and rule.object_service == target
                and rule.action == event.flag):
            return Verdict(rule.constraint, rule.rule_id, event, subject, target)
    return Verdict(DECISION_NO_RULE, None, event, subject, target)


def find_violations(events: Iterable[LogEvent], rules: Iterable[RoeRule],
                    g: PropertyGraph) -> list[Verdict]:
    """Deny verdicts only, in event order."""
    rule_list = sorted(rules, key=lambda r: r.rule_id)
    verdicts = (evaluate_event(e, rule_list, g) for e in events)
    return [v for v in verdicts if v.decision == DECISION_DENY]


def explain_rule(rule_id: str, g: PropertyGraph) -> RuleExplanation:
    """The rule's verbatim subgraph records plus a one-sentence rendering."""
    edge = None
    for candidate in g.edges():
        if "constraint" in candidate.properties and \
                str(candidate.properties.get("id")) == rule_id:
            edge = candidate
            break
    if edge is None:
        raise UnknownRule(rule_id)
    endpoints = sorted((g.vertex(edge.start), g.vertex(edge.end)),
                       key=lambda v: _id_sort_key(v.id))
    records = [render_node_record(v) for v in endpoints]
    records.append(render_relationship_record(g, edge))
    subject = g.vertex(edge.start).properties["service_name"]
    target = g.vertex(edge.end).properties["service_name"]
    verb = "denied" if edge.properties["constraint"] == DECISION_DENY else "allowed"
    sentence = f"{subject} is {verb} {edge.properties['action']} to {target}"
    return RuleExplanation(rule_id=rule_id, records=records, sentence=sentence)
