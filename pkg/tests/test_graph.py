import hashlib
import json

import pytest
from hypothesis import given

from availsim.errors import ValidationError
from availsim.graph import Edge, ServiceGraph, ServiceNode, load_graph, save_graph

from conftest import DEMO
from strategies import graphs


def doc(services, edges):
    return json.dumps({
        "services": [{"name": s, "replicas": 1} for s in services],
        "edges": [{"source": a, "target": b, "async": f} for a, b, f in edges],
    })


def test_minimal_graph():
    g = load_graph(doc(["frontend", "cart"], [("frontend", "cart", False)]))
    assert len(g.services) == 2
    assert len(g.edges) == 1
    assert g.async_edges == ()


def test_demo_fixture_has_three_async_edges():
    g = load_graph((DEMO / "truth.json").read_bytes())
    assert len(g.services) == 16
    assert len(g.edges) == 23
    assert {e.key for e in g.async_edges} == {
        ("checkout", "kafka"), ("kafka", "accounting"), ("kafka", "fraud-detection"),
    }


@pytest.mark.parametrize("document, message", [
    (doc(["frontend"], [("frontend", "ghost", False)]), "unknown edge target"),
    (doc(["frontend"], [("ghost", "frontend", False)]), "unknown edge source"),
    (doc(["a", "a"], []), "duplicate service"),
    (doc(["a", "b"], [("a", "b", False), ("a", "b", True)]), "duplicate edge"),
    (doc(["a"], [("a", "a", False)]), "self-loop"),
    ('{"services": [', "malformed JSON"),
    ('{"services": [{"name": "a", "replicas": 0}], "edges": []}', "replicas"),
    ('{"services": [{"name": "a", "replicas": 2}], "edges": []}', "replicas=2"),
    ('{"services": [{"name": ""}], "edges": []}', "non-empty"),
    ('{"services": [], "edges": [], "extra": 1}', "unknown keys"),
    ('{"services": [{"name": "a", "zone": "x"}], "edges": []}', "unknown keys"),
    (doc(["a", "b"], [("a", "b", "yes")]), "boolean"),
    ('[]', "must be an object"),
])
def test_validation_errors(document, message):
    with pytest.raises(ValidationError, match=message):
        load_graph(document)


def test_bom_rejected():
    with pytest.raises(ValidationError, match="BOM"):
        load_graph(b"\xef\xbb\xbf" + doc(["a"], []).encode())


def test_empty_edge_list_round_trips():
    g = ServiceGraph((ServiceNode("a"),), ())
    text = save_graph(g)
    assert json.loads(text)["edges"] == []
    assert load_graph(text) == g


@given(graphs())
def test_round_trip(g):
    assert load_graph(save_graph(g)) == g


def test_demo_serialisation_byte_stable():
    g = load_graph((DEMO / "truth.json").read_bytes())
    first = hashlib.sha256(save_graph(g).encode()).hexdigest()
    second = hashlib.sha256(save_graph(load_graph(save_graph(g))).encode()).hexdigest()
    assert first == second


def test_ordering_is_canonical():
    g = ServiceGraph(
        (ServiceNode("b"), ServiceNode("a"), ServiceNode("c")),
        (Edge("b", "c"), Edge("a", "c"), Edge("a", "b")),
    )
    assert g.names == ("a", "b", "c")
    assert [e.key for e in g.edges] == [("a", "b"), ("a", "c"), ("b", "c")]


def test_merge_blocking_dominates():
    g = ServiceGraph.from_edges(["a", "b", "c"], [
        ("a", "b", True), ("a", "b", False), ("a", "b", True), ("b", "c", True), ("b", "c", True),
    ])
    assert {e.key: e.is_async for e in g.edges} == {("a", "b"): False, ("b", "c"): True}
