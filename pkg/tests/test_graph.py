import json
import random

import pytest

from palisade.graph import (
    DanglingEndpoint,
    EmptyLabels,
    MalformedRecord,
    PropertyGraph,
    UnknownVertex,
)


def handshake_pair_graph() -> PropertyGraph:
    """Two IP vertices joined by one deduplicated connection per direction."""
    g = PropertyGraph()
    a = g.add_vertex(["IP1"], {"ip": "192.168.1.100"})
    b = g.add_vertex(["IP2"], {"ip": "192.168.1.101"})
    g.add_edge(a, b, "COMMUNICATES_TO")
    g.add_edge(b, a, "COMMUNICATES_TO")
    return g


def random_graph(rng: random.Random, n_vertices: int = 50, n_edges: int = 120) -> PropertyGraph:
    g = PropertyGraph()
    ids = []
    for i in range(n_vertices):
        props = {"name": f"v{i}", "weight": rng.randint(0, 9)}
        if rng.random() < 0.3:
            props["flag"] = rng.random() < 0.5
        ids.append(g.add_vertex([rng.choice(["A", "B", "C"])], props))
    for _ in range(n_edges):
        g.add_edge(rng.choice(ids), rng.choice(ids),
                   rng.choice(["SYN", "ACK", "LINK"]),
                   {"w": round(rng.random(), 6)})
    return g


def brute_force_degree(g: PropertyGraph, vid: str) -> int:
    # independent oracle: scan the full edge list
    total = 0
    for e in g.edges():
        if e.start == vid:
            total += 1
        if e.end == vid:
            total += 1
    return total


def test_add_vertex_returns_retrievable_id():
    g = PropertyGraph()
    vid = g.add_vertex(["FES"], {"service_name": "frontend-service"})
    v = g.vertex(vid)
    assert v.labels == ["FES"]
    assert v.properties["service_name"] == "frontend-service"
    assert g.degree(vid) == 0


def test_add_vertex_empty_property_map():
    g = PropertyGraph()
    vid = g.add_vertex(["X"])
    assert g.vertex(vid).properties == {}


def test_add_vertex_requires_labels():
    g = PropertyGraph()
    with pytest.raises(EmptyLabels):
        g.add_vertex([])


def test_thousand_adds_produce_distinct_ids():
    g = PropertyGraph()
    seen = set()
    for i in range(1000):
        seen.add(g.add_vertex(["N"], {"i": i}))
    assert len(seen) == 1000


def test_add_edge_updates_both_adjacencies():
    g = PropertyGraph()
    a = g.add_vertex(["FES"], {"service_name": "frontend-service"})
    b = g.add_vertex(["ES"], {"service_name": "email-service"})
    eid = g.add_edge(a, b, "COMMUNICATES_TO", {"action": "SYN", "constraint": "deny"})
    assert [e.id for e in g.out_edges(a)] == [eid]
    assert [e.id for e in g.in_edges(b)] == [eid]
    assert g.edge(eid).start == a and g.edge(eid).end == b


def test_self_loop_counts_twice_in_degree():
    g = PropertyGraph()
    v = g.add_vertex(["X"])
    before = g.degree(v)
    g.add_edge(v, v, "L")
    assert g.degree(v) == before + 2


def test_add_edge_to_missing_vertex():
    g = PropertyGraph()
    v = g.add_vertex(["X"])
    with pytest.raises(UnknownVertex):
        g.add_edge(v, "nope", "L")
    with pytest.raises(UnknownVertex):
        g.add_edge("nope", v, "L")


def test_degree_one_in_one_out_is_two():
    g = handshake_pair_graph()
    ip1 = g.find_vertices(label="IP1")[0]
    assert g.degree(ip1) == 2


def test_degree_isolated_vertex_is_zero():
    g = PropertyGraph()
    assert g.degree(g.add_vertex(["X"])) == 0


def test_degree_matches_brute_force_scan():
    rng = random.Random(11)
    g = random_graph(rng)
    for v in g.vertices():
        assert g.degree(v.id) == brute_force_degree(g, v.id)


def test_degree_sum_is_twice_edge_count():
    rng = random.Random(12)
    g = random_graph(rng)
    assert sum(g.degree(v.id) for v in g.vertices()) == 2 * g.edge_count()


def test_model_features_on_handshake_pair():
    g = handshake_pair_graph()
    g.compute_model_features("COMMUNICATES_TO")
    ip1 = g.vertex(g.find_vertices(label="IP1")[0])
    ip2 = g.vertex(g.find_vertices(label="IP2")[0])
    assert ip1.properties["count"] == 2
    assert ip2.properties["count"] == 2
    # edge count is the sum of the endpoint counts, 2 + 2
    for e in g.edges():
        assert e.properties["count"] == 4


def test_model_features_edge_counts_match_degree_oracle():
    rng = random.Random(13)
    g = random_graph(rng)
    g.compute_model_features("SYN")
    syn_edges = [e for e in g.edges() if e.label == "SYN"]

    def syn_degree(vid: str) -> int:
        return sum((e.start == vid) + (e.end == vid) for e in syn_edges)

    for e in syn_edges:
        assert e.properties["count"] == syn_degree(e.start) + syn_degree(e.end)
    for v in g.vertices():
        if syn_degree(v.id):
            assert v.properties["count"] == syn_degree(v.id)


def test_model_features_idempotent():
    rng = random.Random(14)
    g = random_graph(rng)
    g.compute_model_features("ACK")
    first = g.export_jsonl()
    g.compute_model_features("ACK")
    assert g.export_jsonl() == first


def test_model_features_filter_alternatives_and_wildcard():
    g = PropertyGraph()
    a = g.add_vertex(["A"])
    b = g.add_vertex(["B"])
    g.add_edge(a, b, "SYN")
    g.add_edge(b, a, "SYN-ACK")
    g.compute_model_features("SYN|SYN-ACK")
    assert g.vertex(a).properties["count"] == 2
    g2 = PropertyGraph()
    a2 = g2.add_vertex(["A"])
    b2 = g2.add_vertex(["B"])
    g2.add_edge(a2, b2, "anything")
    g2.compute_model_features("*")
    assert g2.vertex(a2).properties["count"] == 1


def test_find_vertices_by_label_and_predicate():
    g = PropertyGraph()
    fes = g.add_vertex(["FES"], {"service_name": "frontend-service"})
    g.add_vertex(["ES"], {"service_name": "email-service"})
    ip = g.add_vertex(["IP1"], {"ip": "192.168.1.100"})
    assert g.find_vertices(label="FES") == [fes]
    assert g.find_vertices(predicate={"ip": "192.168.1.100"}) == [ip]
    assert g.find_vertices(label="FES", predicate={"service_name": "x"}) == []
    assert g.find_vertices(label="ZZZ") == []


def test_partition_view_groups_typed_vertices():
    g = PropertyGraph()
    p = g.add_vertex(["C_1"], {"type": "container"}, vertex_id="27500")
    g.add_vertex(["1"], {"type": "image"}, vertex_id="27549")
    view = g.partition_view("container")
    assert view.partition_label == "C_1"
    assert view.components == [p]


def test_partition_view_unknown_type_is_empty():
    g = PropertyGraph()
    g.add_vertex(["X"], {"type": "container"})
    view = g.partition_view("hypervisor")
    assert view.components == []


def test_partition_views_are_disjoint_and_exhaustive():
    g = PropertyGraph()
    typed = {}
    for i in range(30):
        ctype = ["container", "vm", "switch"][i % 3]
        vid = g.add_vertex([f"C_{(i % 3) + 1}"], {"type": ctype})
        typed.setdefault(ctype, set()).add(vid)
    views = {t: set(g.partition_view(t).components) for t in typed}
    all_ids = set()
    for ctype, members in views.items():
        assert members == typed[ctype]
        assert not (all_ids & members)
        all_ids |= members
    assert all_ids == {v.id for v in g.vertices() if "type" in v.properties}


LISTING_ROE_RECORDS = [
    {"type": "node", "id": "37550", "labels": ["FES"],
     "properties": {"service_name": "frontend-service"}},
    {"type": "node", "id": "37551", "labels": ["ES"],
     "properties": {"service_name": "email-service"}},
    {"type": "relationship", "id": "0", "label": "COMM1",
     "start": {"id": "37550", "labels": ["FES"]},
     "end": {"id": "37551", "labels": ["ES"]},
     "properties": {"action": "SYN", "constraint": "deny",
                    "id": "6ec4f95c-f4e3-4516-92c1-172cec275696"}},
]


def test_roe_records_round_trip_bit_stable():
    text = "".join(json.dumps(r) + "\n" for r in LISTING_ROE_RECORDS)
    g = PropertyGraph.import_jsonl(text)
    assert g.export_jsonl() == text
    rule_edge = g.edge("0")
    assert rule_edge.properties["constraint"] == "deny"
    assert rule_edge.properties["id"] == "6ec4f95c-f4e3-4516-92c1-172cec275696"


def test_empty_graph_round_trip():
    assert PropertyGraph().export_jsonl() == ""
    g = PropertyGraph.import_jsonl("")
    assert g.vertex_count() == 0 and g.edge_count() == 0


def test_random_graph_round_trip_isomorphism():
    rng = random.Random(15)
    g = random_graph(rng, n_vertices=80, n_edges=120)
    text = g.export_jsonl()
    again = PropertyGraph.import_jsonl(text)
    # canonical-form oracle: equal canonical serializations
    assert again.export_jsonl() == text
    assert again.vertex_count() == g.vertex_count()
    assert again.edge_count() == g.edge_count()


def test_import_rejects_malformed_lines():
    with pytest.raises(MalformedRecord) as err:
        PropertyGraph.import_jsonl('{"type":"node","id":"1","labels":["A"]}\nnot json\n')
    assert err.value.line_no == 2
    with pytest.raises(MalformedRecord):
        PropertyGraph.import_jsonl('{"type":"mystery","id":"1"}\n')
    with pytest.raises(MalformedRecord):
        PropertyGraph.import_jsonl('{"type":"node","id":"1","labels":[]}\n')


def test_import_rejects_dangling_endpoint():
    text = (
        '{"type": "node", "id": "1", "labels": ["A"], "properties": {}}\n'
        '{"type": "relationship", "id": "9", "label": "L", "start": "1", '
        '"end": "2", "properties": {}}\n'
    )
    with pytest.raises(DanglingEndpoint):
        PropertyGraph.import_jsonl(text)


def test_generated_ids_skip_imported_ids():
    text = (
        '{"type": "node", "id": "0", "labels": ["A"], "properties": {}}\n'
        '{"type": "node", "id": "2", "labels": ["B"], "properties": {}}\n'
    )
    g = PropertyGraph.import_jsonl(text)
    assert g.add_vertex(["C"]) == "1"
    assert g.add_vertex(["D"]) == "3"


def test_property_scalars_only():
    g = PropertyGraph()
    with pytest.raises(Exception):
        g.add_vertex(["X"], {"nested": {"a": 1}})


def test_concurrent_reads_do_not_block():
    import threading

    g = random_graph(random.Random(16), n_vertices=20, n_edges=30)
    totals = []

    def reader():
        with g.lock.read():
            totals.append(sum(g.degree(v.id) for v in g.vertices()))

    threads = [threading.Thread(target=reader) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(set(totals)) == 1
