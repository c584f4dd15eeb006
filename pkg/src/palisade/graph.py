"""
Embedded property graph: the knowledge substrate for configs, logs,
rules of engagement and audit records.

Vertices carry ordered labels and a flat scalar property map; edges are
directed, labeled, and carry their own properties. The whole graph
round-trips through a line-delimited JSON snapshot format (one
node/relationship record per line). Reads are concurrent-safe; all
mutations go through a single-writer lock.
"""

from __future__ import annotations

import json
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterator

Scalar = str | int | float | bool

_FILTER_ALL = "*"


class GraphError(Exception):
    """Base class for graph-store failures."""


class EmptyLabels(GraphError):
    """A vertex was added without any label."""


class UnknownVertex(GraphError):
    """An operation referenced a vertex id not present in the graph."""


class UnknownEdge(GraphError):
    """An operation referenced an edge id not present in the graph."""


class MalformedRecord(GraphError):
    """A snapshot line could not be decoded into a node/relationship."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DanglingEndpoint(GraphError):
    """A relationship record referenced a node id that was never defined."""


def _check_scalar(key: str, value: Any) -> None:
    # bool is checked first: isinstance(True, int) holds in Python
    if isinstance(value, (bool, str, int, float)):
        return
    raise GraphError(f"property {key!r} is not a scalar: {type(value).__name__}")


@dataclass
class Vertex:
    id: str
    labels: list[str]
    properties: dict[str, Scalar]


@dataclass
class Edge:
    id: str
    label: str
    start: str
    end: str
    properties: dict[str, Scalar]


@dataclass
class PartitionView:
    """All component vertices of one component type, under one partition label."""

    component_type: str
    partition_label: str
    components: list[str] = field(default_factory=list)


class _RWLock:
    """Many readers or one writer. Write acquisition waits out active readers."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if self._readers == 0:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


def _id_sort_key(identifier: str) -> tuple[int, int | str]:
    # numeric ids sort numerically, everything else after, lexicographic
    if identifier.isdigit():
        return (0, int(identifier))
    return (1, identifier)


def _label_filter_match(edge_label: str, edge_label_filter: str) -> bool:
    if edge_label_filter == _FILTER_ALL:
        return True
    return edge_label in edge_label_filter.split("|")


class PropertyGraph:
    """In-memory directed property graph with id-indexed vertices and edges.

    Ids are opaque strings. Generated ids are decimal counters (vertices
    and edges each have their own sequence) that skip over ids already
    taken by imported records.
    """

    def __init__(self) -> None:
        self._vertices: dict[str, Vertex] = {}
        self._edges: dict[str, Edge] = {}
        self._out: dict[str, list[str]] = {}
        self._in: dict[str, list[str]] = {}
        self._next_vertex = 0
        self._next_edge = 0
        self.lock = _RWLock()

    # -- mutation ------------------------------------------------------

    def add_vertex(
        self,
        labels: list[str],
        properties: dict[str, Scalar] | None = None,
        vertex_id: str | None = None,
    ) -> str:
        if not labels:
            raise EmptyLabels("vertex needs at least one label")
        props = dict(properties or {})
        for key, value in props.items():
            _check_scalar(key, value)
        if vertex_id is None:
            vertex_id = self._fresh_vertex_id()
        elif vertex_id in self._vertices:
            raise GraphError(f"vertex id {vertex_id!r} already in use")
        self._vertices[vertex_id] = Vertex(vertex_id, list(labels), props)
        self._out[vertex_id] = []
        self._in[vertex_id] = []
        return vertex_id

    def add_edge(
        self,
        start: str,
        end: str,
        label: str,
        properties: dict[str, Scalar] | None = None,
        edge_id: str | None = None,
    ) -> str:
        if start not in self._vertices:
            raise UnknownVertex(f"start vertex {start!r} does not exist")
        if end not in self._vertices:
            raise UnknownVertex(f"end vertex {end!r} does not exist")
        props = dict(properties or {})
        for key, value in props.items():
            _check_scalar(key, value)
        if edge_id is None:
            edge_id = self._fresh_edge_id()
        elif edge_id in self._edges:
            raise GraphError(f"edge id {edge_id!r} already in use")
        self._edges[edge_id] = Edge(edge_id, label, start, end, props)
        self._out[start].append(edge_id)
        self._in[end].append(edge_id)
        return edge_id

    def _fresh_vertex_id(self) -> str:
        while str(self._next_vertex) in self._vertices:
            self._next_vertex += 1
        vid = str(self._next_vertex)
        self._next_vertex += 1
        return vid

    def _fresh_edge_id(self) -> str:
        while str(self._next_edge) in self._edges:
            self._next_edge += 1
        eid = str(self._next_edge)
        self._next_edge += 1
        return eid

    # -- access --------------------------------------------------------

    def vertex(self, vertex_id: str) -> Vertex:
        try:
            return self._vertices[vertex_id]
        except KeyError:
            raise UnknownVertex(f"vertex {vertex_id!r} does not exist") from None

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._edges[edge_id]
        except KeyError:
            raise UnknownEdge(f"edge {edge_id!r} does not exist") from None

    def has_vertex(self, vertex_id: str) -> bool:
        return vertex_id in self._vertices

    def vertices(self) -> Iterator[Vertex]:
        for vid in sorted(self._vertices, key=_id_sort_key):
            yield self._vertices[vid]

    def edges(self) -> Iterator[Edge]:
        for eid in sorted(self._edges, key=_id_sort_key):
            yield self._edges[eid]

    def vertex_count(self) -> int:
        return len(self._vertices)

    def edge_count(self) -> int:
        return len(self._edges)

    def out_edges(self, vertex_id: str) -> list[Edge]:
        self.vertex(vertex_id)
        return [self._edges[eid] for eid in self._out[vertex_id]]

    def in_edges(self, vertex_id: str) -> list[Edge]:
        self.vertex(vertex_id)
        return [self._edges[eid] for eid in self._in[vertex_id]]

    def degree(self, vertex_id: str) -> int:
        """Incident edge count, incoming plus outgoing; a self-loop counts 2."""
        self.vertex(vertex_id)
        return len(self._out[vertex_id]) + len(self._in[vertex_id])

    def find_vertices(
        self,
        label: str | None = None,
        predicate: dict[str, Scalar] | None = None,
    ) -> list[str]:
        """Ids of all vertices matching label AND every predicate pair, id-ordered."""
        hits = []
        for vertex in self.vertices():
            if label is not None and label not in vertex.labels:
                continue
            if predicate and any(
                vertex.properties.get(k) != v for k, v in predicate.items()
            ):
                continue
            hits.append(vertex.id)
        return hits

    def find_edges(self, label: str | None = None,
                   predicate: dict[str, Scalar] | None = None) -> list[str]:
        hits = []
        for edge in self.edges():
            if label is not None and edge.label != label:
                continue
            if predicate and any(
                edge.properties.get(k) != v for k, v in predicate.items()
            ):
                continue
            hits.append(edge.id)
        return hits

    # -- model-input feature transform -----------------------------------

    def compute_model_features(self, edge_label_filter: str) -> "PropertyGraph":
        """Annotate count features over the edges matching the label filter.

        Every vertex incident to a matching edge gets count = its degree
        restricted to matching edges; every matching edge gets
        count = count(start) + count(end). Re-running overwrites with the
        same values. The filter is an exact label, alternatives joined
        with "|", or "*" for all edges.
        """
        matched = [e for e in self._edges.values()
                   if _label_filter_match(e.label, edge_label_filter)]
        restricted: dict[str, int] = {}
        for edge in matched:
            restricted[edge.start] = restricted.get(edge.start, 0) + 1
            restricted[edge.end] = restricted.get(edge.end, 0) + 1
        for vid, count in restricted.items():
            self._vertices[vid].properties["count"] = count
        for edge in matched:
            edge.properties["count"] = restricted[edge.start] + restricted[edge.end]
        return self

    # -- partitions ------------------------------------------------------

    def partition_view(self, component_type: str) -> PartitionView:
        """Group the component vertices whose type property equals the given type."""
        members = [v for v in self.vertices()
                   if v.properties.get("type") == component_type]
        label = members[0].labels[0] if members else ""
        return PartitionView(
            component_type=component_type,
            partition_label=label,
            components=[v.id for v in members],
        )

    # -- snapshot format -------------------------------------------------

    def export_jsonl(self) -> str:
        """Serialize to the line-delimited snapshot format.

        All node records come first in ascending id order, then all
        relationship records in ascending id order; a fixed key order and
        sorted property keys make the output canonical.
        """
        lines = [render_node_record(v) for v in self.vertices()]
        for edge in self.edges():
            lines.append(render_relationship_record(self, edge))
        return "".join(line + "\n" for line in lines)

    @classmethod
    def import_jsonl(cls, text: str) -> "PropertyGraph":
        """Rebuild a graph from snapshot text; inverse of export_jsonl."""
        graph = cls()
        relationships: list[tuple[int, dict]] = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            if not raw.strip():
                continue
            record = parse_record(raw, line_no)
            if record["type"] == "node":
                if record["id"] in graph._vertices:
                    raise MalformedRecord(line_no, f"duplicate node id {record['id']!r}")
                graph.add_vertex(record["labels"], record["properties"],
                                 vertex_id=record["id"])
            else:
                relationships.append((line_no, record))
        for line_no, record in relationships:
            if record["start"] not in graph._vertices:
                raise DanglingEndpoint(
                    f"line {line_no}: start node {record['start']!r} not defined")
            if record["end"] not in graph._vertices:
                raise DanglingEndpoint(
                    f"line {line_no}: end node {record['end']!r} not defined")
            if record["id"] in graph._edges:
                raise MalformedRecord(line_no, f"duplicate relationship id {record['id']!r}")
            graph.add_edge(record["start"], record["end"], record["label"],
                           record["properties"], edge_id=record["id"])
        return graph


# -- record helpers (shared with ingestion and rule explanations) ---------

def render_node_record(vertex: Vertex) -> str:
    return json.dumps({
        "type": "node",
        "id": vertex.id,
        "labels": list(vertex.labels),
        "properties": dict(sorted(vertex.properties.items())),
    })


def render_relationship_record(graph: PropertyGraph, edge: Edge) -> str:
    start = graph.vertex(edge.start)
    end = graph.vertex(edge.end)
    return json.dumps({
        "type": "relationship",
        "id": edge.id,
        "label": edge.label,
        "start": {"id": start.id, "labels": list(start.labels)},
        "end": {"id": end.id, "labels": list(end.labels)},
        "properties": dict(sorted(edge.properties.items())),
    })


def _endpoint_id(value: Any, line_no: int, side: str) -> str:
    # endpoints may be bare ids or {"id": ..., "labels": [...]} objects
    if isinstance(value, str):
        return value
    if isinstance(value, dict) and isinstance(value.get("id"), str):
        return value["id"]
    raise MalformedRecord(line_no, f"relationship {side} endpoint is malformed")


def parse_record(raw: str, line_no: int = 0) -> dict:
    """Decode one snapshot line into a normalized record dict."""
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(line_no, f"invalid JSON: {exc.msg}") from None
    if not isinstance(payload, dict):
        raise MalformedRecord(line_no, "record is not an object")
    kind = payload.get("type")
    if kind not in ("node", "relationship"):
        raise MalformedRecord(line_no, f"unknown record type {kind!r}")
    identifier = payload.get("id")
    if not isinstance(identifier, str) or not identifier:
        raise MalformedRecord(line_no, "missing or non-string id")
    properties = payload.get("properties", {})
    if not isinstance(properties, dict):
        raise MalformedRecord(line_no, "properties is not an object")
    for key, value in properties.items():
        if not isinstance(value, (bool, str, int, float)):
            raise MalformedRecord(line_no, f"property {key!r} is not a scalar")
    if kind == "node":
        labels = payload.get("labels")
        if not isinstance(labels, list) or not labels or \
                not all(isinstance(l, str) for l in labels):
            raise MalformedRecord(line_no, "node labels must be a non-empty string list")
        return {"type": "node", "id": identifier, "labels": labels,
                "properties": properties}
    label = payload.get("label")
    if not isinstance(label, str) or not label:
        raise MalformedRecord(line_no, "relationship label missing")
    if "start" not in payload or "end" not in payload:
        raise MalformedRecord(line_no, "relationship endpoints missing")
    return {
        "type": "relationship",
        "id": identifier,
        "label": label,
        "start": _endpoint_id(payload["start"], line_no, "start"),
        "end": _endpoint_id(payload["end"], line_no, "end"),
        "properties": properties,
    }
