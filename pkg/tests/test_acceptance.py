"""End-to-end acceptance suite. Each criterion prints its own pass/fail
line (run with -s to see them on success)."""

import functools
import json
import random
import time
from datetime import datetime

import pytest

from palisade.graph import PropertyGraph
from palisade.ingest import (
    FLAG_EDGE_FILTER,
    LogEvent,
    export_model_input,
    ingest_config,
    ingest_log_events,
    parse_log_line,
)
from palisade.llm import (
    NotWhitelisted,
    PromptTemplate,
    StubLlm,
    TaskNotPermitted,
    default_registry,
    instantiate_template,
    llm_complete,
)
from palisade.orchestrator import ACTION_BLOCK, ACTION_RESTART
from palisade.retrieval import Chunk, HashedBagEmbedder, VectorIndex, cosine
from palisade.rules import evaluate_event, load_rules
from palisade.scenario import ScenarioRunner, ScenarioSpec
from palisade.simulator import EnterpriseSimulator, Topology

Q1 = "is there active breach in the system?"
Q2 = "Describe the rule that prohibits the connection."
RULE_ID = "6ec4f95c-f4e3-4516-92c1-172cec275696"
FRONTEND_HOST = "192.168.1.100"
EMAIL_HOST = "192.168.1.108"


def criterion(number: int, name: str):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"criterion {number} [{name}]: FAIL", flush=True)
                raise
            print(f"criterion {number} [{name}]: PASS", flush=True)
        return wrapper
    return decorate


def breach_spec(fixtures_dir, steps=20) -> ScenarioSpec:
    return ScenarioSpec(
        topology=json.loads((fixtures_dir / "ob_topology.json").read_text()),
        config=json.loads((fixtures_dir / "frontend_config.json").read_text()),
        roe=(fixtures_dir / "roe.jsonl").read_text(),
        breach=json.loads((fixtures_dir / "breach.json").read_text()),
        steps=steps,
    )


def run_breach(fixtures_dir):
    """One full scenario run plus the two analyst queries."""
    runner = ScenarioRunner(breach_spec(fixtures_dir))
    result = runner.run()
    session = runner.orchestrator.create_session()
    q1 = runner.orchestrator.dispatch_query(session, Q1).to_payload()
    q2 = runner.orchestrator.dispatch_query(session, Q2).to_payload()
    verdict_stream = "".join(json.dumps(v.to_dict()) + "\n"
                             for v in runner.orchestrator.verdict_log)
    with runner.graph.lock.read():
        graph_export = runner.graph.export_jsonl()
        model_input = export_model_input(runner.graph)
    return runner, result, q1, q2, verdict_stream, graph_export, model_input


@pytest.fixture(scope="module")
def breach_artifacts(fixtures_dir):
    started = time.monotonic()
    artifacts = run_breach(fixtures_dir)
    return artifacts, time.monotonic() - started


@criterion(1, "end-to-end breach scenario")
def test_criterion_1_breach_scenario(breach_artifacts, roe_text):
    (runner, result, q1, q2, *_), elapsed = breach_artifacts
    tabs = q1["tabs"]
    assert len(tabs) == 2
    compromise_tabs = [t for t in tabs
                       if "frontend-service" in t["answer"]
                       and "compromised" in t["answer"]]
    deny_tabs = [t for t in tabs
                 if "email-service" in t["answer"] and "deny" in t["answer"]]
    assert compromise_tabs and deny_tabs

    records = roe_text.splitlines()
    assert any(all(record in tab["answer"] for record in records)
               for tab in q2["tabs"])
    assert elapsed < 10.0, f"scenario took {elapsed:.1f}s"


@criterion(2, "containment loop")
def test_criterion_2_containment(breach_artifacts, fixtures_dir):
    (runner, result, *_), elapsed = breach_artifacts

    planning_cycles = [r for r in result.reports if r.plan]
    assert len(planning_cycles) == 1
    plan = planning_cycles[0].plan
    assert [(a.kind, a.parameters()) for a in plan] == [
        (ACTION_BLOCK, ("frontend-service", "email-service")),
        (ACTION_RESTART, ("C1_1",)),
    ]
    assert all(ok for _, ok, _ in planning_cycles[0].executed)

    # zero frontend -> email deny verdicts after the execution cycle
    first_plan_index = result.reports.index(planning_cycles[0])
    for report in result.reports[first_plan_index + 1:]:
        assert not [v for v in report.verdicts
                    if v.subject_service == "frontend-service"
                    and v.object_service == "email-service"]

    # all other traffic volumes unchanged (+-0) vs an uncontained baseline
    spec = breach_spec(fixtures_dir)
    baseline_sim = EnterpriseSimulator(Topology.from_dict(spec.topology))
    from palisade.simulator import BreachScript

    baseline_sim.inject_breach(BreachScript.from_dict(spec.breach))
    baseline_lines = baseline_sim.run_steps(spec.steps)

    def pair_counts(lines):
        counts = {}
        for line in lines:
            e = parse_log_line(line)
            if (e.src_ip, e.dst_ip) == (FRONTEND_HOST, EMAIL_HOST):
                continue  # the contained pair
            counts[(e.src_ip, e.dst_ip, e.flag)] = \
                counts.get((e.src_ip, e.dst_ip, e.flag), 0) + 1
        return counts

    assert pair_counts(result.lines) == pair_counts(baseline_lines)
    assert elapsed < 10.0


@criterion(3, "count transform")
def test_criterion_3_model_input_transform(handshake_lines):
    g = PropertyGraph()
    ingest_log_events([parse_log_line(l) for l in handshake_lines], g)
    records = [json.loads(l) for l in export_model_input(g).splitlines()]
    nodes = {r["properties"]["ip_address"]: r for r in records
             if r["type"] == "node"}
    assert nodes["192.168.1.100"]["properties"]["count"] == 2
    assert nodes["192.168.1.101"]["properties"]["count"] == 2
    rels = [r for r in records if r["type"] == "relationship"]
    assert rels and all(r["properties"]["count"] == 4 for r in rels)

    rng = random.Random(1003)
    for trial in range(100):
        graph = PropertyGraph()
        hosts = [f"10.{trial % 16}.0.{i}" for i in range(1, rng.randint(3, 9))]
        events = []
        for i in range(rng.randint(5, 120)):
            src, dst = rng.sample(hosts, 2)
            events.append(LogEvent(datetime(2023, 10, 25, 11, 0, i % 60),
                                   src, dst, "TCP",
                                   rng.choice(["SYN", "SYN-ACK", "ACK", "FIN", "RST"])))
        ingest_log_events(events, graph)
        exported = [json.loads(l)
                    for l in export_model_input(graph, FLAG_EDGE_FILTER).splitlines()]
        rels = [r for r in exported if r["type"] == "relationship"]
        node_counts = {r["id"]: r["properties"]["count"]
                       for r in exported if r["type"] == "node"}

        def degree(vid):
            return sum((r["start"]["id"] == vid) + (r["end"]["id"] == vid)
                       for r in rels)

        for vid, count in node_counts.items():
            assert count == degree(vid)  # 0 tolerance
        for rel in rels:
            assert rel["properties"]["count"] == \
                node_counts[rel["start"]["id"]] + node_counts[rel["end"]["id"]]


@criterion(4, "graph round-trip")
def test_criterion_4_round_trip():
    rng = random.Random(1004)
    labels = ["A", "B", "C_1", "IP1", "host", "config"]
    for _ in range(200):
        g = PropertyGraph()
        ids = []
        for i in range(rng.randint(1, 40)):
            props = {}
            if rng.random() < 0.8:
                props["name"] = f"v{i}"
            if rng.random() < 0.5:
                props["weight"] = rng.randint(-5, 99)
            if rng.random() < 0.3:
                props["ratio"] = round(rng.random(), 9)
            if rng.random() < 0.3:
                props["flag"] = rng.random() < 0.5
            ids.append(g.add_vertex(rng.sample(labels, rng.randint(1, 3)), props))
        for _ in range(rng.randint(0, 60)):
            g.add_edge(rng.choice(ids), rng.choice(ids),
                       rng.choice(["SYN", "uses", "runs", "member_of"]),
                       {"k": rng.randint(0, 9)} if rng.random() < 0.6 else {})
        text = g.export_jsonl()
        assert PropertyGraph.import_jsonl(text).export_jsonl() == text  # exact


@criterion(5, "verdict oracle equivalence")
def test_criterion_5_verdict_oracle():
    rng = random.Random(1005)
    g = PropertyGraph()
    services = [f"svc-{i}" for i in range(12)]
    doc = {"partitions": {}}
    for i, s in enumerate(services):
        doc[f"{s}s"] = {"type": "image"}
        doc["partitions"][f"{s}-partition"] = {
            "component-type": "container",
            "service_name": s,
            "components": [{"name": f"P{i}_1", "host": f"10.2.0.{i + 1}"}],
        }
    ingest_config(doc, g)
    ip_of = {s: f"10.2.0.{i + 1}" for i, s in enumerate(services)}
    vids = {s: g.add_vertex(["Service"], {"service_name": s}) for s in services}
    raw = []
    for i in range(30):
        a, b = rng.sample(services, 2)
        action = rng.choice(["SYN", "SYN-ACK", "ACK", "FIN", "RST"])
        constraint = rng.choice(["allow", "deny"])
        rule_id = f"r{i:02d}"
        g.add_edge(vids[a], vids[b], "COMMUNICATES_TO",
                   {"action": action, "constraint": constraint, "id": rule_id})
        raw.append((rule_id, a, b, action, constraint))
    rules = load_rules(g)

    matches = 0
    for i in range(1000):
        src, dst = rng.sample(services, 2)
        flag = rng.choice(["SYN", "SYN-ACK", "ACK", "FIN", "RST"])
        event = LogEvent(datetime(2023, 10, 25, 11, 0, i % 60),
                         ip_of[src], ip_of[dst], "TCP", flag)
        got = evaluate_event(event, rules, g)
        # brute-force nested-loop matcher
        expected = ("no-rule", None)
        for rule_id, a, b, action, constraint in sorted(raw):
            if a == src and b == dst and action == flag:
                expected = (constraint, rule_id)
                break
        matches += (got.decision, got.rule_id) == expected
    assert matches == 1000  # 100%


@criterion(6, "retrieval exactness")
def test_criterion_6_retrieval(breach_artifacts):
    rng = random.Random(1006)
    vocabulary = ["alpha", "beta", "gamma", "delta", "breach", "deny", "frontend",
                  "email", "partition", "config", "service", "container", "host",
                  "image", "verdict", "log", "syn", "ack", "active", "system"]
    embedder = HashedBagEmbedder()
    chunks = [Chunk(f"chunk-{i:03d}",
                    " ".join(rng.choices(vocabulary, k=rng.randint(3, 14))),
                    (str(i),))
              for i in range(100)]
    index = VectorIndex(embedder)
    index.index_chunks(chunks)
    exact = 0
    total = 0
    for _ in range(20):
        query = " ".join(rng.choices(vocabulary, k=rng.randint(1, 5)))
        qv = embedder.embed(query)
        ranked = sorted(((cosine(qv, embedder.embed(c.text)), c) for c in chunks),
                        key=lambda t: (-t[0], t[1].chunk_id))
        for k in (1, 3, 10):
            total += 1
            got = [(c.chunk_id, s) for c, s in index.similarity_search(query, k)]
            want = [(c.chunk_id, s) for s, c in ranked[:k]]
            exact += got == want
    assert exact == total  # 100% of queries

    (runner, *_), _ = breach_artifacts
    top = runner.retrieval.search("frontend partition configuration", 1)
    config_id = runner.graph.find_vertices(label="config")[0]
    assert top[0][0].chunk_id == f"chunk-{config_id}"


@criterion(7, "whitelist safety")
def test_criterion_7_whitelist(fixtures_dir):
    registry = default_registry()
    adapter = StubLlm()
    rogue = PromptTemplate("injected-at-request-time", "zero-shot",
                           "question-answering", "{query}\n{evidence}")
    chunk = Chunk("chunk-0", "decision=deny subject=a object=b", ("0",))
    assert registry.check_whitelist(rogue.template_id) == "reject"
    with pytest.raises(NotWhitelisted):
        instantiate_template(rogue, Q1, [chunk], registry)
    assert adapter.invocations == 0

    with pytest.raises(TaskNotPermitted):
        llm_complete(adapter, "prompt", "translation")
    assert adapter.invocations == 0

    # drive the full pipeline and observe the adapter boundary
    runner = ScenarioRunner(breach_spec(fixtures_dir, steps=5), adapter=adapter)
    runner.run()
    session = runner.orchestrator.create_session()
    runner.orchestrator.dispatch_query(session, Q1)
    runner.orchestrator.dispatch_query(session, Q2)
    assert adapter.invocations > 0
    assert set(adapter.observed_tasks) <= {"question-answering", "summarization"}


@criterion(8, "determinism")
def test_criterion_8_determinism(breach_artifacts, fixtures_dir, handshake_lines):
    (_, _, q1_a, q2_a, verdicts_a, graph_a, model_a), _ = breach_artifacts
    _, _, q1_b, q2_b, verdicts_b, graph_b, model_b = run_breach(fixtures_dir)
    assert json.dumps(q1_a, sort_keys=True) == json.dumps(q1_b, sort_keys=True)
    assert json.dumps(q2_a, sort_keys=True) == json.dumps(q2_b, sort_keys=True)
    assert verdicts_a == verdicts_b
    assert graph_a == graph_b
    assert model_a == model_b

    def transform_bytes():
        g = PropertyGraph()
        ingest_log_events([parse_log_line(l) for l in handshake_lines], g)
        return export_model_input(g)

    assert transform_bytes() == transform_bytes()
