import numpy as np
import pytest

from saxkit.errors import CyclicBase, DuplicateLog, ViewAbsent
from saxkit.eventlog import parse_csv
from saxkit.graphstore import KnowledgeGraph, activity_node_id, closure_pairs
from saxkit import discovery

TWO_EVENT_CSV = b"""case_id,activity,timestamp
c1,A,2023-01-01T08:00:00Z
c1,B,2023-01-01T08:05:00Z
"""


@pytest.fixture
def tiny_graph():
    return KnowledgeGraph().load_log(parse_csv(TWO_EVENT_CSV))


def test_load_log_node_and_edge_counts(tiny_graph):
    assert len(tiny_graph.nodes_with_label("Event")) == 2
    assert len(tiny_graph.nodes_with_label("Case")) == 1
    assert len(tiny_graph.nodes_with_label("Activity")) == 2
    assert len(tiny_graph.relationships_of_type("CORRELATED_TO")) == 2


def test_load_log_twice_is_duplicate(tiny_graph):
    with pytest.raises(DuplicateLog):
        tiny_graph.load_log(parse_csv(TWO_EVENT_CSV))


def test_parking_base_layer(parking_graph):
    assert len(parking_graph.nodes_with_label("Case")) == 1000
    real = [n for n in parking_graph.nodes_with_label("Activity") if "Marker" not in n.labels]
    assert len(real) == 5


def test_directly_follows_simple_path(tiny_graph):
    tiny_graph.infer_directly_follows()
    df = tiny_graph.relationships_of_type("DIRECTLY_FOLLOWS")
    assert len(df) == 1
    src = tiny_graph.nodes[df[0].source]
    tgt = tiny_graph.nodes[df[0].target]
    assert (src.properties["activity"], tgt.properties["activity"]) == ("A", "B")


def test_directly_follows_two_identical_cases():
    csv_data = (b"case_id,activity,timestamp\n"
                b"c1,A,2023-01-01T08:00:00Z\nc1,B,2023-01-01T08:01:00Z\n"
                b"c2,A,2023-01-01T09:00:00Z\nc2,B,2023-01-01T09:01:00Z\n")
    g = KnowledgeGraph().load_log(parse_csv(csv_data))
    g.infer_directly_follows()
    df = g.relationships_of_type("DIRECTLY_FOLLOWS")
    assert len(df) == 2
    cases = {g.nodes[r.source].properties["case_id"] for r in df}
    assert cases == {"c1", "c2"}


def test_df_count_property_random_logs():
    rng = np.random.default_rng(5)
    rows = ["case_id,activity,timestamp"]
    lengths = {}
    t = 0
    for case in range(20):
        n = int(rng.integers(1, 9))
        lengths[f"c{case}"] = n
        for _ in range(n):
            t += 60000
            rows.append(f"c{case},A{rng.integers(0, 4)},{1672560000000 + t}")
    g = KnowledgeGraph().load_log(parse_csv("\n".join(rows).encode()))
    g.infer_directly_follows()
    for case_id, n in lengths.items():
        events = g.case_events(case_id)
        out_edges = sum(len(g.out_edges(e.node_id, "DIRECTLY_FOLLOWS")) for e in events)
        assert out_edges == n - 1


def test_directly_follows_idempotent(tiny_graph):
    tiny_graph.infer_directly_follows()
    version = tiny_graph.layer_versions["df"]
    snapshot = tiny_graph.to_ndjson()
    tiny_graph.infer_directly_follows()
    assert tiny_graph.layer_versions["df"] == version
    assert tiny_graph.to_ndjson() == snapshot


def _activity_graph(edges):
    g = KnowledgeGraph()
    names = {a for e in edges for a in e}
    for name in sorted(names):
        g.add_node(activity_node_id(name), {"Activity"}, {"name": name})
    for a, b in edges:
        g.add_relationship("CAUSES", activity_node_id(a), activity_node_id(b), {"coefficient": 1.0})
    return g


def test_closure_chain_adds_composed_edge():
    g = _activity_graph([("A", "B"), ("B", "C")])
    g.transitive_closure("CAUSES")
    pairs = {(g.nodes[r.source].properties["name"], g.nodes[r.target].properties["name"])
             for r in g.relationships_of_type("INDIRECTLY_CAUSES")}
    assert pairs == {("A", "B"), ("B", "C"), ("A", "C")}


def test_closure_empty_base():
    g = _activity_graph([])
    g.transitive_closure("CAUSES")
    assert g.relationships_of_type("INDIRECTLY_CAUSES") == []


def test_closure_cyclic_causes_rejected():
    g = _activity_graph([("A", "B"), ("B", "A")])
    with pytest.raises(CyclicBase):
        g.transitive_closure("CAUSES")


def brute_force_reachability(n, edges):
    adjacency = np.zeros((n, n), dtype=bool)
    for a, b in edges:
        adjacency[a, b] = True
    reach = adjacency.copy()
    for _ in range(n):
        reach = reach | (reach.astype(int) @ adjacency.astype(int) > 0)
    return {(a, b) for a in range(n) for b in range(n) if reach[a, b]}


def random_dag(rng, max_nodes=12):
    n = int(rng.integers(2, max_nodes + 1))
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.3:
                edges.append((i, j))
    return n, edges


def test_closure_matches_brute_force_on_random_dags():
    rng = np.random.default_rng(42)
    for _ in range(60):
        n, edges = random_dag(rng)
        got = closure_pairs({(f"n{a}", f"n{b}") for a, b in edges})
        want = {(f"n{a}", f"n{b}") for a, b in brute_force_reachability(n, edges)}
        assert got == want


def test_closure_no_self_loops_on_acyclic_base():
    g = _activity_graph([("A", "B"), ("B", "C"), ("A", "C")])
    g.transitive_closure("CAUSES")
    for rel in g.relationships_of_type("INDIRECTLY_CAUSES"):
        assert rel.source != rel.target


def test_deletion_cascades(tiny_graph):
    tiny_graph.infer_directly_follows()
    event = tiny_graph.nodes_with_label("Event")[0]
    tiny_graph.remove_node(event.node_id)
    for rel in tiny_graph.rels.values():
        assert event.node_id not in (rel.source, rel.target)


def test_layer_isolation(parking_graph, parking_log):
    process_version = parking_graph.layer_versions["process"]
    df_version = parking_graph.layer_versions["df"]
    g = KnowledgeGraph.from_ndjson(parking_graph.to_ndjson())
    g.layer_meta.update(parking_graph.layer_meta)
    from tests.conftest import hazardous_causal_view
    from saxkit.causal import write_causal_layer
    view = hazardous_causal_view(g)
    before = {layer: v for layer, v in g.layer_versions.items()}
    write_causal_layer(g, view)
    assert g.layer_versions["process"] == before["process"]
    assert g.layer_versions["df"] == before["df"]
    assert g.layer_versions["causal"] > before["causal"]
    assert parking_graph.layer_versions["process"] == process_version
    assert parking_graph.layer_versions["df"] == df_version


def test_query_view_absent():
    g = KnowledgeGraph().load_log(parse_csv(TWO_EVENT_CSV))
    with pytest.raises(ViewAbsent):
        g.query_view("process")
    with pytest.raises(ViewAbsent):
        g.query_view("causal")


def test_query_view_parking_process(parking_graph):
    records = parking_graph.query_view("process")
    assert len(records) == 8
    assert records == sorted(records, key=lambda r: (r["from"], r["to"]))
    frequencies = {(r["from"], r["to"]): r["frequency"] for r in records}
    from tests.conftest import PARKING_EDGES
    assert frequencies == PARKING_EDGES


def test_query_view_causal_records(parking_graph):
    from tests.conftest import hazardous_causal_view
    from saxkit.causal import write_causal_layer
    g = KnowledgeGraph.from_ndjson(parking_graph.to_ndjson())
    g.layer_meta.update(parking_graph.layer_meta)
    write_causal_layer(g, hazardous_causal_view(g))
    records = g.query_view("causal")
    assert {rec["Cause"] for rec in records} == {"check if hazardous parking"}
    assert len(records) == 2


def test_ndjson_round_trip(parking_graph):
    text = parking_graph.to_ndjson()
    again = KnowledgeGraph.from_ndjson(text).to_ndjson()
    assert text == again


def test_graphml_round_trip(tiny_graph):
    tiny_graph.infer_directly_follows()
    discovery.discover(tiny_graph)
    text = tiny_graph.to_graphml()
    g = KnowledgeGraph.from_graphml(text)
    assert g.layer_versions == tiny_graph.layer_versions
    assert g.layer_meta == tiny_graph.layer_meta
    assert len(g.nodes) == len(tiny_graph.nodes)
    assert len(g.rels) == len(tiny_graph.rels)
    assert g.query_view("process") == tiny_graph.query_view("process")


def test_relationship_endpoint_constraints(tiny_graph):
    event = tiny_graph.nodes_with_label("Event")[0]
    case = tiny_graph.nodes_with_label("Case")[0]
    with pytest.raises(ValueError):
        tiny_graph.add_relationship("FLOWS_TO", event.node_id, case.node_id)


def test_load_empty_log_rejected():
    from saxkit.errors import EmptyLog
    from saxkit.eventlog import EventLog
    hollow = EventLog(traces={}, activity_universe=frozenset(), attribute_schema={})
    with pytest.raises(EmptyLog):
        KnowledgeGraph().load_log(hollow)
