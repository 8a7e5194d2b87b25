import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gen import random_connected_graphs
from namecast.errors import ScenarioError, UnknownNode, WildcardSubscription
from namecast.routing import StrategyConfig
from namecast.simnet import (
    Link,
    RunMetrics,
    Scenario,
    Simulation,
    Topology,
    hop_distances,
    join,
    leave,
    publish,
    run,
    shortest_paths,
)
from oracles import brute_force_distance


def test_line_distances():
    tree = shortest_paths(Topology.line(3), 1)
    assert tree.dist == {1: 0, 2: 1, 3: 2}
    assert tree.path_to_root(3) == [3, 2, 1]


def test_triangle_tie_break():
    tri = Topology([1, 2, 3], [(1, 2), (2, 3), (1, 3)])
    assert shortest_paths(tri, 1).parent[3] == 1
    square = Topology([1, 2, 3, 4], [(1, 2), (1, 3), (2, 4), (3, 4)])
    assert shortest_paths(square, 1).parent[4] == 2


def test_disconnected_node():
    tree = shortest_paths(Topology([1, 2, 3], [(1, 2)]), 1)
    assert tree.dist[3] == math.inf and tree.parent[3] is None
    assert tree.path_to_root(3) is None


def test_unknown_root():
    with pytest.raises(UnknownNode):
        shortest_paths(Topology.line(2), 9)


@pytest.mark.parametrize(
    "nodes,links",
    [([1], [(1, 1)]), ([1, 2], [(1, 3)]), ([1, 2], [(1, 2), (2, 1)]), ([1, 2], [(1, 2, 0)]), ([1, 2], [(1, 2, 1, -1)])],
)
def test_topology_validation(nodes, links):
    with pytest.raises(ScenarioError):
        Topology(nodes, links)


@settings(max_examples=60)
@given(st.integers(0, 2**32))
def test_dijkstra_matches_brute_force(seed):
    topo = random_connected_graphs(1, random.Random(seed), max_nodes=6)[0]
    root = topo.nodes[0]
    tree = shortest_paths(topo, root)
    for n in topo.nodes:
        assert tree.dist[n] == pytest.approx(brute_force_distance(topo, n, root))


def test_topology_json_roundtrip(tmp_path):
    topo = Topology([1, 2, 3], [Link(1, 2, 2.0, 0.5), Link(2, 3)], names={"cnn.com": 3})
    path = tmp_path / "t.json"
    path.write_text(json.dumps(topo.to_json()))
    back = Topology.load(path)
    assert back.to_json() == topo.to_json()
    assert back.resolve("CNN.com") == 3 and back.resolve("n2") == 2
    with pytest.raises(ScenarioError):
        Topology.from_json({"nodes": [1], "links": []})


def test_scenario_json_roundtrip():
    sc = Scenario(
        [join(0, 1, "opaque://a"), publish(1, 2, "opaque://a", b"x"), leave(2, 1, "opaque://a")],
        StrategyConfig("rpf", rp=2),
    )
    back = Scenario.from_json(json.loads(json.dumps(sc.to_json())))
    assert back.to_json() == sc.to_json()
    for bad in ({"events": []}, {"format": 1, "events": [{"kind": "boom"}]}, {"format": 1, "events": [{"kind": "join"}]}):
        with pytest.raises(ScenarioError):
            Scenario.from_json(bad)


def test_empty_run_is_all_zero():
    m = run(Topology.line(3), [], "rpf")
    assert m == RunMetrics()


def test_publish_without_subscribers():
    m = run(Topology.line(3), [publish(0, 1, "opaque://a@n1")], "rpf")
    assert m.link_transmissions == 0 and m.deliveries == {} and m.publishes == 1


def test_events_ordered_by_time_then_insertion():
    sim = Simulation(Topology.line(2))
    order = []
    sim.schedule(1.0, lambda: order.append("b"))
    sim.schedule(0.5, lambda: order.append("a"))
    sim.schedule(1.0, lambda: order.append("c"))
    sim.run_until()
    assert order == ["a", "b", "c"]


def test_join_then_publish_delivers_once():
    sim = Simulation(Topology.line(3), StrategyConfig("rpf"))
    sim.join(3, "opaque://a@n1")
    sim.join(3, "opaque://a@n1")  # reference counted
    sim.publish(1, "opaque://a@n1", b"p")
    sim.run_until()
    assert sim.metrics.deliveries == {3: [("opaque://a@n1", 0)]}
    assert sim.metrics.mean_path_stretch == 1.0
    assert sim.leave(3, "opaque://a@n1") and sim.leave(3, "opaque://a@n1")
    assert not sim.leave(3, "opaque://a@n1")


def test_wildcard_join_rejected():
    with pytest.raises(WildcardSubscription):
        Simulation(Topology.line(2)).join(1, "opaque://*@n1")


def test_delivery_causality_and_conservation():
    topo = Topology([1, 2, 3, 4], [Link(1, 2, 1, 0.3), Link(2, 3, 1, 0.7), Link(3, 4, 1, 2.0), Link(1, 4, 5, 0.1)])
    sim = Simulation(topo, StrategyConfig("flood"))
    for n in (2, 3, 4):
        sim.join(n, "opaque://a")
    sim.publish(1, "opaque://a")
    sim.run_until()
    assert len(sim.log) == 3
    for rec in sim.log:
        hops = list(zip(rec.path, rec.path[1:]))
        assert rec.path[0] == 1 and rec.path[-1] == rec.node
        assert all(v in topo.adj[u] for u, v in hops)
        assert rec.time >= sum(topo.link(u, v).delay for u, v in hops) - 1e-12


def test_signed_run_accepts_and_rejects_tamper():
    topo = Topology.line(3)
    sim = Simulation(topo, StrategyConfig("rpf"), sign=True, seed=7)
    sim.join(3, "opaque://a@n1")
    sim.publish(1, "opaque://a@n1", b"ok")
    sim.run_until()
    assert sim.metrics.delivery_count == 1 and sim.metrics.rejected_packets == 0

    from dataclasses import replace

    sim = Simulation(topo, StrategyConfig("rpf"), sign=True, seed=7, verify_every_hop=True)
    sim.tamper = lambda p, u, v: replace(p, signed=replace(p.signed, payload=b"evil")) if (u, v) == (1, 2) else p
    sim.join(3, "opaque://a@n1")
    sim.publish(1, "opaque://a@n1", b"ok")
    sim.run_until()
    assert sim.metrics.delivery_count == 0 and sim.metrics.rejected_packets == 1
    assert sim.metrics.link_transmissions == 1  # dropped at the first router


@pytest.mark.parametrize("strategy", ["flood", "rpf", "statedist", "hybrid", "reflector"])
def test_determinism(strategy):
    rng = random.Random(11)
    topo = Topology.random_connected(12, 6, rng, max_cost=3)
    events = [join(0, n, "opaque://g") for n in (2, 5, 9)]
    events += [publish(1 + i, i % 12, "opaque://g", b"x") for i in range(10)]
    cfg = StrategyConfig(strategy, rp=0, edge_caches=(3, 7), reflector=4)
    a, b = run(topo, events, cfg, seed=5), run(topo, events, cfg, seed=5)
    assert json.dumps(a.to_json()) == json.dumps(b.to_json())


def test_hop_distances():
    assert hop_distances(Topology.ring(4), 1) == {1: 0, 2: 1, 4: 1, 3: 2}
