import math
import random

import pytest

from palisade.graph import PropertyGraph
from palisade.ingest import ingest_config, ingest_roe
from palisade.retrieval import (
    Chunk,
    EmptyIndex,
    HashedBagEmbedder,
    RetrievalService,
    VectorIndex,
    chunk_graph,
    cosine,
    partition_tag_for,
    render_chunk_text,
    tokenize,
)


def ob_like_graph(roe_text: str, frontend_config: dict) -> PropertyGraph:
    g = PropertyGraph()
    ingest_roe(roe_text, g)
    ingest_config(frontend_config, g)
    return g


def test_embed_is_deterministic_and_unit_norm():
    embedder = HashedBagEmbedder()
    first = embedder.embed("frontend partition configuration")
    second = embedder.embed("frontend partition configuration")
    assert first == second
    assert abs(math.sqrt(sum(x * x for x in first)) - 1.0) < 1e-6


def test_embed_empty_text_is_zero_vector():
    embedder = HashedBagEmbedder()
    vector = embedder.embed("")
    assert all(x == 0.0 for x in vector)
    assert all(x == 0.0 for x in embedder.embed("the of and"))


def test_tokenize_drops_stopwords_and_splits_punctuation():
    assert tokenize("is there active breach in the system?") == \
        ["active", "breach", "system"]
    assert tokenize("rule_id=6ec4f95c") == ["rule", "id", "6ec4f95c"]


def test_config_chunk_contains_properties_and_edge_line(roe_text, frontend_config):
    g = ob_like_graph(roe_text, frontend_config)
    config_id = g.find_vertices(label="config")[0]
    text = render_chunk_text(g, config_id)
    assert "configuration.ram=200m" in text
    assert "ram=200m" in text
    assert "requires <- frontend-partition" in text


def test_isolated_vertex_chunk_has_no_edge_lines():
    g = PropertyGraph()
    vid = g.add_vertex(["X"], {"note": "alone"})
    text = render_chunk_text(g, vid)
    assert text == "X\nnote=alone"


def test_chunk_count_equals_selected_vertex_count(roe_text, frontend_config):
    g = ob_like_graph(roe_text, frontend_config)
    chunks = chunk_graph(g)
    assert len(chunks) == g.vertex_count()
    only_config = chunk_graph(g, labels={"config"})
    assert len(only_config) == 1


def test_partition_tags(roe_text, frontend_config):
    g = ob_like_graph(roe_text, frontend_config)
    tags = {c.chunk_id: c.partition_tag for c in chunk_graph(g)}
    partition_id = g.find_vertices(predicate={"name": "frontend-partition"})[0]
    config_id = g.find_vertices(label="config")[0]
    comp_id = g.find_vertices(label="component", predicate={"name": "C1_1"})[0]
    fes_id = g.find_vertices(label="FES")[0]
    assert tags[f"chunk-{partition_id}"] == "frontend-partition"
    assert tags[f"chunk-{config_id}"] == "frontend-partition"
    assert tags[f"chunk-{comp_id}"] == "frontend-partition"
    # rule subject vertex resolves through its service name
    assert tags[f"chunk-{fes_id}"] == "frontend-partition"


def test_chunk_source_refs_exist(roe_text, frontend_config):
    g = ob_like_graph(roe_text, frontend_config)
    edge_ids = {e.id for e in g.edges()}
    for chunk in chunk_graph(g):
        vid = chunk.source_refs[0]
        assert g.has_vertex(vid)
        assert all(ref in edge_ids for ref in chunk.source_refs[1:])
        assert chunk.text


def test_similarity_search_empty_index():
    index = VectorIndex(HashedBagEmbedder())
    with pytest.raises(EmptyIndex):
        index.similarity_search("anything", 1)


def test_similarity_search_k_covers_all():
    index = VectorIndex(HashedBagEmbedder())
    chunks = [Chunk(f"chunk-{i}", f"text number {i}", (str(i),)) for i in range(4)]
    index.index_chunks(chunks)
    hits = index.similarity_search("text number", 10)
    assert len(hits) == 4
    scores = [s for _, s in hits]
    assert scores == sorted(scores, reverse=True)


def test_similarity_search_matches_full_sort_oracle():
    rng = random.Random(41)
    vocabulary = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta",
                  "theta", "iota", "kappa", "lambda", "mu", "breach", "deny",
                  "frontend", "email", "config", "partition"]
    embedder = HashedBagEmbedder()
    chunks = []
    for i in range(100):
        words = rng.choices(vocabulary, k=rng.randint(3, 12))
        chunks.append(Chunk(f"chunk-{i:03d}", " ".join(words), (str(i),)))
    index = VectorIndex(embedder)
    index.index_chunks(chunks)
    for q in range(20):
        query = " ".join(rng.choices(vocabulary, k=rng.randint(1, 5)))
        query_vector = embedder.embed(query)
        # brute-force oracle: full sort of every cosine
        ranked = sorted(
            ((cosine(query_vector, embedder.embed(c.text)), c) for c in chunks),
            key=lambda t: (-t[0], t[1].chunk_id),
        )
        for k in (1, 3, 10):
            got = index.similarity_search(query, k)
            want = [(c.chunk_id, s) for s, c in ranked[:k]]
            assert [(c.chunk_id, s) for c, s in got] == want


def test_frontend_configuration_query_ranks_f1_first(roe_text, frontend_config):
    g = ob_like_graph(roe_text, frontend_config)
    service = RetrievalService(g)
    service.refresh()
    config_id = g.find_vertices(label="config")[0]
    hits = service.search("frontend partition configuration", 1)
    assert hits[0][0].chunk_id == f"chunk-{config_id}"
    # and it beats every other chunk in the graph
    everything = service.search("frontend partition configuration", len(service.chunks))
    assert everything[0][0].chunk_id == f"chunk-{config_id}"
    assert everything[0][1] > everything[1][1]


def test_partition_filtered_search(roe_text, frontend_config):
    g = ob_like_graph(roe_text, frontend_config)
    service = RetrievalService(g)
    service.refresh()
    hits = service.search("frontend partition configuration", 50,
                          partition_tag="frontend-partition")
    assert hits
    assert all(c.partition_tag == "frontend-partition" for c, _ in hits)


def test_refresh_tracks_graph_changes(roe_text, frontend_config):
    g = ob_like_graph(roe_text, frontend_config)
    service = RetrievalService(g)
    n = service.refresh()
    assert n == g.vertex_count()
    g.add_vertex(["note"], {"kind": "audit"})
    assert service.refresh() == n + 1
