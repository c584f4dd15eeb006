"""
Graph retrieval for grounded answering: render vertices into text chunks,
embed them with a deterministic hashed bag-of-words backend (remote
embedding services can substitute), and serve exact cosine top-k search.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field

import httpx

from .graph import PropertyGraph, Vertex, _id_sort_key

DEFAULT_DIMENSIONS = 256

STOPWORDS = frozenset({
    "a", "an", "and", "are", "as", "at", "be", "by", "can", "do", "does",
    "for", "from", "has", "have", "if", "in", "is", "it", "its", "of", "on",
    "or", "our", "that", "the", "there", "this", "to", "was", "we", "were",
    "will", "with", "you", "your",
})

_TOKEN_RE = re.compile(r"[0-9a-z]+")


class BackendUnavailable(RuntimeError):
    """A remote embedding or completion endpoint could not be reached."""


class EmptyIndex(RuntimeError):
    """similarity_search was called before any chunk was indexed."""


@dataclass(frozen=True)
class Chunk:
    """A retrievable text rendering of one vertex and its neighborhood."""

    chunk_id: str
    text: str
    source_refs: tuple[str, ...]
    partition_tag: str | None = None


def _fnv1a(token: str) -> int:
    value = 0x811C9DC5
    for byte in token.encode("utf-8"):
        value ^= byte
        value = (value * 0x01000193) & 0xFFFFFFFF
    return value


def tokenize(text: str) -> list[str]:
    return [t for t in _TOKEN_RE.findall(text.lower()) if t not in STOPWORDS]


class HashedBagEmbedder:
    """Deterministic local embedder: token counts hashed into D buckets,
    L2-normalized. All-stopword text embeds to the zero vector."""

    def __init__(self, dimensions: int = DEFAULT_DIMENSIONS):
        self.dimensions = dimensions

    def embed(self, text: str) -> list[float]:
        vector = [0.0] * self.dimensions
        for token in tokenize(text):
            vector[_fnv1a(token) % self.dimensions] += 1.0
        norm = math.sqrt(sum(x * x for x in vector))
        if norm == 0.0:
            return vector
        return [x / norm for x in vector]


class RemoteEmbedder:
    """HTTP embedding backend: POST {text} -> {vector}."""

    def __init__(self, url: str, dimensions: int = DEFAULT_DIMENSIONS,
                 timeout: float = 30.0):
        self.url = url
        self.dimensions = dimensions
        self.timeout = timeout

    def embed(self, text: str) -> list[float]:
        try:
            response = httpx.post(self.url, json={"text": text}, timeout=self.timeout)
            response.raise_for_status()
            return list(response.json()["vector"])
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise BackendUnavailable(f"embedding backend {self.url}: {exc}") from exc


def cosine(a: list[float], b: list[float]) -> float:
    # embeddings are unit (or zero) vectors, so the dot product is the cosine
    return sum(x * y for x, y in zip(a, b))


# -- chunk rendering ---------------------------------------------------------

def _display_name(vertex: Vertex) -> str:
    name = vertex.properties.get("name") or vertex.properties.get("service_name") \
        or vertex.properties.get("ip")
    return str(name) if name else vertex.labels[0]


def partition_tag_for(g: PropertyGraph, vertex_id: str) -> str | None:
    """Best-effort partition attribution for a vertex, following the
    member_of / runs / requires / uses wiring; audit records carry an
    explicit partition property."""
    vertex = g.vertex(vertex_id)
    explicit = vertex.properties.get("partition")
    if isinstance(explicit, str):
        return explicit
    in_edges = g.in_edges(vertex_id)
    out_edges = g.out_edges(vertex_id)
    is_partition = any(e.label == "member_of" for e in in_edges) or \
        any(e.label in ("uses", "requires") for e in out_edges)
    if is_partition:
        name = vertex.properties.get("name")
        return str(name) if name else None
    for e in out_edges:
        if e.label == "member_of":
            name = g.vertex(e.end).properties.get("name")
            if name:
                return str(name)
    for e in in_edges:
        if e.label == "runs":  # host: attribute via the component running on it
            tag = partition_tag_for(g, e.start)
            if tag:
                return tag
        if e.label in ("requires", "uses"):
            name = g.vertex(e.start).properties.get("name")
            if name:
                return str(name)
    service = vertex.properties.get("service_name")
    if isinstance(service, str):
        for pid in g.find_vertices(predicate={"service_name": service}):
            candidate = g.vertex(pid)
            if "name" in candidate.properties and pid != vertex_id:
                return str(candidate.properties["name"])
    return None


def render_chunk_text(g: PropertyGraph, vertex_id: str) -> str:
    """Deterministic text for one vertex: labels, key=value properties,
    and one line per incident edge with the neighbor's display name."""
    vertex = g.vertex(vertex_id)
    lines = [" ".join(vertex.labels)]
    for key in sorted(vertex.properties):
        lines.append(f"{key}={vertex.properties[key]}")
    out_lines = []
    for e in g.out_edges(vertex_id):
        out_lines.append((e.label, _display_name(g.vertex(e.end)), e.id))
    for label, display, _ in sorted(out_lines, key=lambda t: (t[0], t[1], _id_sort_key(t[2]))):
        lines.append(f"{label} -> {display}")
    in_lines = []
    for e in g.in_edges(vertex_id):
        in_lines.append((e.label, _display_name(g.vertex(e.start)), e.id))
    for label, display, _ in sorted(in_lines, key=lambda t: (t[0], t[1], _id_sort_key(t[2]))):
        lines.append(f"{label} <- {display}")
    return "\n".join(lines)


def chunk_graph(g: PropertyGraph, labels: set[str] | None = None,
                partition: str | None = None) -> list[Chunk]:
    """One chunk per selected vertex, in id order."""
    chunks = []
    for vertex in g.vertices():
        if labels is not None and not labels.intersection(vertex.labels):
            continue
        tag = partition_tag_for(g, vertex.id)
        if partition is not None and tag != partition:
            continue
        refs = [vertex.id]
        refs += sorted({e.id for e in g.out_edges(vertex.id)} |
                       {e.id for e in g.in_edges(vertex.id)}, key=_id_sort_key)
        chunks.append(Chunk(
            chunk_id=f"chunk-{vertex.id}",
            text=render_chunk_text(g, vertex.id),
            source_refs=tuple(refs),
            partition_tag=tag,
        ))
    return chunks


# -- exact cosine index --------------------------------------------------------

@dataclass
class _Entry:
    chunk: Chunk
    vector: list[float]


class VectorIndex:
    """Exhaustive cosine search over embedded chunks; exact by construction.

    Results come back score-descending with ties broken by ascending
    chunk id. Rebuilds exclude concurrent searches.
    """

    def __init__(self, embedder):
        self.embedder = embedder
        self._entries: list[_Entry] = []
        self._lock = threading.Lock()

    def index_chunks(self, chunks: list[Chunk]) -> int:
        with self._lock:
            self._entries = [_Entry(c, self.embedder.embed(c.text)) for c in chunks]
            return len(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def chunk_ids(self) -> set[str]:
        return {e.chunk.chunk_id for e in self._entries}

    def get_chunk(self, chunk_id: str) -> Chunk | None:
        for entry in self._entries:
            if entry.chunk.chunk_id == chunk_id:
                return entry.chunk
        return None

    def similarity_search(self, query: str, k: int,
                          partition_tag: str | None = None) -> list[tuple[Chunk, float]]:
        if k <= 0:
            raise ValueError("k must be positive")
        with self._lock:
            if not self._entries:
                raise EmptyIndex("no chunks have been indexed")
            query_vector = self.embedder.embed(query)
            scored = []
            for entry in self._entries:
                if partition_tag is not None and entry.chunk.partition_tag != partition_tag:
                    continue
                scored.append((cosine(query_vector, entry.vector), entry.chunk))
        scored.sort(key=lambda t: (-t[0], t[1].chunk_id))
        return [(chunk, score) for score, chunk in scored[:k]]


class RetrievalService:
    """Keeps the chunk index in step with the graph it was built from."""

    def __init__(self, graph: PropertyGraph, embedder=None,
                 dimensions: int = DEFAULT_DIMENSIONS):
        self.graph = graph
        self.embedder = embedder or HashedBagEmbedder(dimensions)
        self.index = VectorIndex(self.embedder)
        self._chunks: list[Chunk] = []

    def refresh(self) -> int:
        with self.graph.lock.read():
            self._chunks = chunk_graph(self.graph)
        return self.index.index_chunks(self._chunks)

    @property
    def chunks(self) -> list[Chunk]:
        return list(self._chunks)

    def partitions(self) -> list[str]:
        seen: dict[str, None] = {}
        for chunk in self._chunks:
            if chunk.partition_tag is not None:
                seen.setdefault(chunk.partition_tag, None)
        return list(seen)

    def search(self, query: str, k: int,
               partition_tag: str | None = None) -> list[tuple[Chunk, float]]:
        return self.index.similarity_search(query, k, partition_tag)
