"""
Knowledge extraction: parse network logs, enterprise configuration
documents and ROE policy files into the property graph, and export the
model-training input derived from observed communications.
"""

from __future__ import annotations

import json
import re
import uuid
from dataclasses import dataclass, field
from datetime import datetime

from .graph import (
    GraphError,
    PropertyGraph,
    Scalar,
    _id_sort_key,
    _label_filter_match,
    parse_record,
)

TCP_FLAGS = ("SYN", "SYN-ACK", "ACK", "FIN", "RST")

#: Matches every TCP flag edge label; the default filter for model input.
FLAG_EDGE_FILTER = "|".join(TCP_FLAGS)

_FLOW_ID_NAMESPACE = uuid.uuid5(uuid.NAMESPACE_URL, "palisade:flow")


class ParseError(ValueError):
    """A log line deviated from the expected grammar."""

    def __init__(self, reason: str, column: int):
        self.reason = reason
        self.column = column
        super().__init__(f"{reason} (column {column})")


class SchemaError(ValueError):
    """A configuration document failed validation at the given path."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")


class MalformedRule(ValueError):
    """A ROE record is missing a required field."""


@dataclass(frozen=True)
class LogEvent:
    """One parsed network-log line."""

    timestamp: datetime
    src_ip: str
    dst_ip: str
    protocol: str
    flag: str


@dataclass
class IngestReport:
    """What an ingestion pass created and what it folded as duplicates."""

    vertices: int = 0
    edges: int = 0
    duplicates: int = 0
    events: int = 0
    created_vertex_ids: list[str] = field(default_factory=list)
    created_edge_ids: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"vertices": self.vertices, "edges": self.edges,
                "duplicates": self.duplicates, "events": self.events}


# -- log line grammar ------------------------------------------------------
# '[' date ' ' time ']' ' ' ip ' -> ' ip ': ' proto ' ' flag

_IP_RE = re.compile(r"\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3}")


def _parse_ip(line: str, pos: int) -> tuple[str, int]:
    m = _IP_RE.match(line, pos)
    if not m:
        raise ParseError("expected dotted-quad IPv4 address", pos)
    ip = m.group(0)
    if any(int(octet) > 255 for octet in ip.split(".")):
        raise ParseError(f"IPv4 octet out of range in {ip!r}", pos)
    return ip, m.end()


def _expect(line: str, pos: int, literal: str, what: str) -> int:
    if not line.startswith(literal, pos):
        raise ParseError(f"expected {what}", pos)
    return pos + len(literal)


def parse_log_line(line: str) -> LogEvent:
    """Parse `[YYYY-MM-DD HH:MM:SS] <src> -> <dst>: <PROTO> <FLAG>`."""
    pos = _expect(line, 0, "[", "'['")
    stamp = line[pos:pos + 19]
    try:
        timestamp = datetime.strptime(stamp, "%Y-%m-%d %H:%M:%S")
    except ValueError:
        raise ParseError("expected timestamp 'YYYY-MM-DD HH:MM:SS'", pos) from None
    pos += 19
    pos = _expect(line, pos, "] ", "'] ' after timestamp")
    src_ip, pos = _parse_ip(line, pos)
    pos = _expect(line, pos, " -> ", "' -> ' between addresses")
    dst_ip, pos = _parse_ip(line, pos)
    pos = _expect(line, pos, ": ", "': ' before protocol")
    proto_end = line.find(" ", pos)
    if proto_end < 0:
        raise ParseError("expected ' ' after protocol", pos)
    protocol = line[pos:proto_end]
    if not protocol.isalpha():
        raise ParseError(f"protocol {protocol!r} is not alphabetic", pos)
    pos = proto_end + 1
    flag = line[pos:].rstrip("\n")
    if flag not in TCP_FLAGS:
        raise ParseError(f"flag {flag!r} not one of {'/'.join(TCP_FLAGS)}", pos)
    if src_ip == dst_ip:
        raise ParseError("source and destination address are identical", 0)
    return LogEvent(timestamp, src_ip, dst_ip, protocol, flag)


def render_log_line(event: LogEvent) -> str:
    """Inverse of parse_log_line."""
    stamp = event.timestamp.strftime("%Y-%m-%d %H:%M:%S")
    return f"[{stamp}] {event.src_ip} -> {event.dst_ip}: {event.protocol} {event.flag}"


def parse_log_text(text: str) -> list[LogEvent]:
    return [parse_log_line(line) for line in text.splitlines() if line.strip()]


# -- log ingestion ---------------------------------------------------------

def _next_ip_label_index(g: PropertyGraph) -> int:
    highest = 0
    for v in g.vertices():
        for label in v.labels:
            m = re.fullmatch(r"IP(\d+)", label)
            if m:
                highest = max(highest, int(m.group(1)))
    return highest + 1


def _vertex_by_ip(g: PropertyGraph, ip: str) -> str | None:
    hits = g.find_vertices(predicate={"ip": ip})
    return hits[0] if hits else None


def ingest_log_events(events: list[LogEvent], g: PropertyGraph) -> IngestReport:
    """Warehouse parsed log events as IP vertices and flag-labeled edges.

    One vertex per distinct address (labeled IP1, IP2, ... in first-seen
    order); one edge per distinct (src, dst, flag) triple carrying the
    first occurrence's timestamp. Repeats of a triple only bump the
    duplicate tally in the report.
    """
    report = IngestReport()
    next_label = _next_ip_label_index(g)
    for event in events:
        report.events += 1
        endpoint_ids = []
        for ip in (event.src_ip, event.dst_ip):
            vid = _vertex_by_ip(g, ip)
            if vid is None:
                vid = g.add_vertex([f"IP{next_label}"], {"ip": ip})
                next_label += 1
                report.vertices += 1
                report.created_vertex_ids.append(vid)
            endpoint_ids.append(vid)
        src_id, dst_id = endpoint_ids
        existing = [e for e in g.out_edges(src_id)
                    if e.end == dst_id and e.label == event.flag]
        if existing:
            report.duplicates += 1
            continue
        eid = g.add_edge(src_id, dst_id, event.flag, {
            "time": event.timestamp.strftime("%H:%M:%S"),
            "time_month": event.timestamp.month,
            "time_year": event.timestamp.year,
            "time_date": event.timestamp.day,
        })
        report.edges += 1
        report.created_edge_ids.append(eid)
    return report


# -- configuration documents -------------------------------------------------
# Document shape: reserved keys "partitions" and "created"; every other
# top-level key declares a service/component type, e.g.
#   {"frontend-services": {"type": "image"},
#    "partitions": {"frontend-partition": {"component-type": "container",
#        "service_name": "frontend-service", "configuration": {"ram": "200m"},
#        "components": ["C1_1", "C1_2"]}}}
# Components may also be {"name": ..., "host": <ip>} objects, which binds
# the component to a host vertex via a `runs` edge.

_RESERVED_DOC_KEYS = ("partitions", "created")


def _service_names_match(declared: str, referenced: str) -> bool:
    return declared == referenced or declared.rstrip("s") == referenced.rstrip("s")


def _flatten(prefix: str, value, out: dict[str, Scalar], path: str) -> None:
    if isinstance(value, dict):
        for key, sub in value.items():
            child = f"{prefix}.{key}" if prefix else key
            _flatten(child, sub, out, f"{path}.{key}")
    elif isinstance(value, (bool, str, int, float)):
        out[prefix] = value
    else:
        raise SchemaError(path, f"unsupported value type {type(value).__name__}")


def validate_config_document(doc: dict) -> None:
    if not isinstance(doc, dict):
        raise SchemaError("$", "document must be a JSON object")
    declarations = {k: v for k, v in doc.items() if k not in _RESERVED_DOC_KEYS}
    for name, decl in declarations.items():
        if not isinstance(decl, dict) or not isinstance(decl.get("type"), str):
            raise SchemaError(name, "service declaration needs a string 'type'")
    partitions = doc.get("partitions", {})
    if not isinstance(partitions, dict):
        raise SchemaError("partitions", "must be an object")
    for pname, part in partitions.items():
        path = f"partitions.{pname}"
        if not isinstance(part, dict):
            raise SchemaError(path, "must be an object")
        service = part.get("service_name")
        if not isinstance(service, str):
            raise SchemaError(f"{path}.service_name", "missing service name")
        if not any(_service_names_match(d, service) for d in declarations):
            raise SchemaError(f"{path}.service_name",
                              f"references undeclared service {service!r}")
        if not isinstance(part.get("component-type"), str):
            raise SchemaError(f"{path}.component-type", "missing component type")
        components = part.get("components")
        if not isinstance(components, list) or not components:
            raise SchemaError(f"{path}.components", "component list must be non-empty")
        for idx, comp in enumerate(components):
            cpath = f"{path}.components[{idx}]"
            if isinstance(comp, str):
                continue
            if isinstance(comp, dict) and isinstance(comp.get("name"), str):
                continue
            raise SchemaError(cpath, "component must be a name or {name, host} object")


def _find_or_create(g: PropertyGraph, labels: list[str], key_props: dict,
                    extra_props: dict | None = None,
                    report: IngestReport | None = None) -> str:
    hits = g.find_vertices(label=labels[0], predicate=key_props)
    if hits:
        return hits[0]
    vid = g.add_vertex(labels, {**key_props, **(extra_props or {})})
    if report is not None:
        report.vertices += 1
        report.created_vertex_ids.append(vid)
    return vid


def _link_once(g: PropertyGraph, start: str, end: str, label: str,
               props: dict | None = None, report: IngestReport | None = None) -> str:
    for e in g.out_edges(start):
        if e.end == end and e.label == label:
            return e.id
    eid = g.add_edge(start, end, label, props or {})
    if report is not None:
        report.edges += 1
        report.created_edge_ids.append(eid)
    return eid


def ingest_config(doc: dict, g: PropertyGraph) -> IngestReport:
    """Project a configuration document into the graph.

    Creates one vertex per component type (labeled by its 1-based
    declaration index), one per partition (labeled C_k), one per
    configuration map (label config, dotted-key flattened), and one per
    component instance; wires partition-uses-type, partition-requires-
    config, component-member_of-partition and component-runs-host edges.
    Re-ingestion of the same document is a no-op.
    """
    validate_config_document(doc)
    report = IngestReport()
    created = doc.get("created")
    declarations = {k: v for k, v in doc.items() if k not in _RESERVED_DOC_KEYS}

    uses_props: dict[str, Scalar] = {}
    requires_props: dict[str, Scalar] = {}
    if isinstance(created, str):
        requires_props["created_dt"] = created
        try:
            when = datetime.strptime(created, "%Y-%m-%d")
            uses_props = {"time": "00:00:00", "time_month": when.month,
                          "time_year": when.year, "time_date": when.day}
        except ValueError:
            pass

    type_vertex_by_decl: dict[str, str] = {}
    for index, (decl_name, decl) in enumerate(declarations.items(), start=1):
        extra = {k: v for k, v in decl.items() if isinstance(v, (bool, str, int, float))}
        type_vertex_by_decl[decl_name] = _find_or_create(
            g, [str(index)], {"name": decl_name}, extra, report)

    for index, (pname, part) in enumerate(doc.get("partitions", {}).items(), start=1):
        partition_id = _find_or_create(
            g, [f"C_{index}"], {"name": pname},
            {"type": part["component-type"], "service_name": part["service_name"]},
            report)
        decl_name = next(d for d in declarations
                         if _service_names_match(d, part["service_name"]))
        _link_once(g, partition_id, type_vertex_by_decl[decl_name], "uses",
                   uses_props, report)

        configuration = part.get("configuration")
        if isinstance(configuration, dict) and configuration:
            flat: dict[str, Scalar] = {}
            _flatten("configuration", configuration, flat,
                     f"partitions.{pname}.configuration")
            config_name = f"f_{index}"
            existing = [e.end for e in g.out_edges(partition_id)
                        if e.label == "requires"
                        and g.vertex(e.end).properties.get("name") == config_name]
            if existing:
                config_id = existing[0]
            else:
                config_id = g.add_vertex(["config"], {"name": config_name, **flat})
                report.vertices += 1
                report.created_vertex_ids.append(config_id)
                eid = g.add_edge(partition_id, config_id, "requires", requires_props)
                report.edges += 1
                report.created_edge_ids.append(eid)

        for comp in part["components"]:
            comp_name = comp if isinstance(comp, str) else comp["name"]
            comp_id = _find_or_create(g, ["component"], {"name": comp_name},
                                      report=report)
            _link_once(g, comp_id, partition_id, "member_of", report=report)
            host_ip = comp.get("host") if isinstance(comp, dict) else None
            if host_ip:
                host_id = _vertex_by_ip(g, host_ip)
                if host_id is None:
                    host_id = g.add_vertex(["host"], {"ip": host_ip})
                    report.vertices += 1
                    report.created_vertex_ids.append(host_id)
                _link_once(g, comp_id, host_id, "runs", report=report)
    return report


# -- rules of engagement -----------------------------------------------------

def ingest_roe(jsonl_text: str, g: PropertyGraph) -> int:
    """Load ROE records (graph snapshot format) and return the rule count.

    Record ids are preserved when free; colliding ids are remapped to fresh
    ones. Every relationship must carry action and constraint properties and
    both endpoints must name a service.
    """
    nodes: list[tuple[int, dict]] = []
    relationships: list[tuple[int, dict]] = []
    for line_no, raw in enumerate(jsonl_text.splitlines(), start=1):
        if not raw.strip():
            continue
        record = parse_record(raw, line_no)
        (nodes if record["type"] == "node" else relationships).append((line_no, record))

    id_map: dict[str, str] = {}
    for line_no, record in nodes:
        if "service_name" not in record["properties"]:
            raise MalformedRule(
                f"line {line_no}: rule endpoint is missing service_name")
        wanted = record["id"]
        vid = None if g.has_vertex(wanted) else wanted
        id_map[wanted] = g.add_vertex(record["labels"], record["properties"],
                                      vertex_id=vid)

    count = 0
    for line_no, record in relationships:
        props = dict(record["properties"])
        for required in ("action", "constraint"):
            if required not in props:
                raise MalformedRule(f"line {line_no}: rule is missing {required!r}")
        start = id_map.get(record["start"], record["start"])
        end = id_map.get(record["end"], record["end"])
        if not g.has_vertex(start) or not g.has_vertex(end):
            raise MalformedRule(f"line {line_no}: rule endpoint node not defined")
        for endpoint in (start, end):
            if "service_name" not in g.vertex(endpoint).properties:
                raise MalformedRule(
                    f"line {line_no}: rule endpoint is missing service_name")
        if "id" not in props:
            existing_rules = sum(1 for e in g.edges() if "constraint" in e.properties)
            props["id"] = f"rule-{existing_rules + 1}"
        try:
            g.add_edge(start, end, record["label"], props, edge_id=record["id"])
        except GraphError:
            g.add_edge(start, end, record["label"], props)
        count += 1
    return count


# -- model-training input -----------------------------------------------------

def export_model_input(g: PropertyGraph,
                       edge_label_filter: str = FLAG_EDGE_FILTER) -> str:
    """Export the connection subgraph annotated with count features.

    Edges matching the filter are deduplicated to one connection per
    directed (start, end) pair; the count transform then runs over that
    connection graph, so a vertex's count is its number of distinct to- or
    from-connections and an edge's count is the sum of its endpoint counts.
    """
    matched = [e for e in g.edges() if _label_filter_match(e.label, edge_label_filter)]
    if not matched:
        return ""
    pairs: list[tuple[str, str]] = []
    for edge in matched:
        pair = (edge.start, edge.end)
        if pair not in pairs:
            pairs.append(pair)
    pairs.sort(key=lambda p: (_id_sort_key(p[0]), _id_sort_key(p[1])))

    derived = PropertyGraph()
    endpoint_ids = sorted({vid for pair in pairs for vid in pair}, key=_id_sort_key)
    for vid in endpoint_ids:
        source = g.vertex(vid)
        props: dict[str, Scalar] = {}
        address = source.properties.get("ip", source.properties.get("ip_address"))
        if address is not None:
            props["ip_address"] = address
        derived.add_vertex(list(source.labels), props, vertex_id=vid)
    for start, end in pairs:
        flow_id = str(uuid.uuid5(_FLOW_ID_NAMESPACE, f"{start}->{end}"))
        derived.add_edge(start, end, "COMMUNICATES_TO", {"id": flow_id})
    derived.compute_model_features("COMMUNICATES_TO")
    return derived.export_jsonl()


def load_config_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc.msg}") from None
    validate_config_document(doc)
    return doc
