"""Deterministic discrete-event substrate for the distribution strategies.

Links are lossless, undirected and FIFO with a fixed delay. Events are
processed in time order; ties keep insertion order. All iteration over
nodes and links is sorted so that a run is a pure function of its inputs.
"""

from __future__ import annotations

import hashlib
import heapq
import itertools
import json
import math
import random
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Union

from .errors import ScenarioError, UnknownNode
from .identity import GroupIdentity, SignedPacket, Verdict, create_group_identity, sign_packet, verify_packet
from .matching import covers, expand_wildcard
from .naming import GroupUri, as_uri

FORMAT_VERSION = 1
INF = math.inf


# -- topology ------------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    u: int
    v: int
    cost: float = 1.0
    delay: float = 1.0


class Topology:
    """Undirected graph with integer node ids and optional endpoint names.

    Every node answers to ``n<id>``; ``names`` adds further endpoint names
    (host names, technology addresses) used to resolve instantiations.
    """

    def __init__(self, nodes: Iterable[int], links: Iterable[Link | tuple], names: Mapping[str, int] | None = None):
        self.nodes: tuple[int, ...] = tuple(sorted(set(nodes)))
        node_set = set(self.nodes)
        self.adj: dict[int, dict[int, Link]] = {n: {} for n in self.nodes}
        self.links: dict[tuple[int, int], Link] = {}
        for raw in links:
            link = raw if isinstance(raw, Link) else Link(*raw)
            if link.u == link.v:
                raise ScenarioError(f"self-loop on node {link.u}")
            if link.u not in node_set or link.v not in node_set:
                raise ScenarioError(f"link {link.u}-{link.v} references an unknown node")
            if not link.cost > 0 or link.delay < 0:
                raise ScenarioError(f"link {link.u}-{link.v}: cost must be > 0 and delay >= 0")
            key = (min(link.u, link.v), max(link.u, link.v))
            if key in self.links:
                raise ScenarioError(f"duplicate link {key[0]}-{key[1]}")
            self.links[key] = link
            self.adj[link.u][link.v] = link
            self.adj[link.v][link.u] = link
        self.names: dict[str, int] = {f"n{n}": n for n in self.nodes}
        for name, node in (names or {}).items():
            if node not in node_set:
                raise ScenarioError(f"name {name!r} points at unknown node {node}")
            self.names[name.lower()] = node

    def __contains__(self, node: object) -> bool:
        return node in self.adj

    def neighbors(self, node: int) -> list[int]:
        return sorted(self.adj[node])

    def link(self, u: int, v: int) -> Link:
        return self.adj[u][v]

    def resolve(self, endpoint: str) -> int | None:
        return self.names.get(endpoint.lower())

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        return len(hop_distances(self, self.nodes[0])) == len(self.nodes)

    # constructors for common shapes
    @classmethod
    def line(cls, n: int, **kw) -> Topology:
        return cls(range(1, n + 1), [(i, i + 1) for i in range(1, n)], **kw)

    @classmethod
    def ring(cls, n: int) -> Topology:
        return cls(range(1, n + 1), [(i, i % n + 1) for i in range(1, n + 1)])

    @classmethod
    def star(cls, leaves: int) -> Topology:
        return cls(range(leaves + 1), [(0, i) for i in range(1, leaves + 1)])

    @classmethod
    def random_connected(cls, n: int, extra_links: int, rng: random.Random, max_cost: int = 1) -> Topology:
        """Random spanning tree plus ``extra_links`` chords, integer costs."""
        order = list(range(n))
        rng.shuffle(order)
        pairs = set()
        for i in range(1, n):
            a, b = order[i], order[rng.randrange(i)]
            pairs.add((min(a, b), max(a, b)))
        candidates = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in pairs]
        rng.shuffle(candidates)
        pairs.update(candidates[:extra_links])
        links = [Link(a, b, float(rng.randint(1, max_cost)), 1.0) for a, b in sorted(pairs)]
        return cls(range(n), links)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "format": FORMAT_VERSION,
            "nodes": list(self.nodes),
            "links": [{"u": l.u, "v": l.v, "cost": l.cost, "delay": l.delay} for _, l in sorted(self.links.items())],
        }
        custom = {k: v for k, v in self.names.items() if k != f"n{v}"}
        if custom:
            out["names"] = dict(sorted(custom.items()))
        return out

    @classmethod
    def from_json(cls, data: Any) -> Topology:
        if not isinstance(data, dict) or data.get("format") != FORMAT_VERSION:
            raise ScenarioError(f"topology must be an object with \"format\": {FORMAT_VERSION}")
        try:
            nodes = [int(n) for n in data["nodes"]]
            links = [
                Link(int(l["u"]), int(l["v"]), float(l.get("cost", 1.0)), float(l.get("delay", 1.0)))
                for l in data["links"]
            ]
            names = {str(k): int(v) for k, v in data.get("names", {}).items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed topology: {exc}") from exc
        return cls(nodes, links, names)

    @classmethod
    def load(cls, path: str | Path) -> Topology:
        return cls.from_json(_load_json(path))


def _load_json(path: str | Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from exc


# -- shortest paths ------------------------------------------------------------

@dataclass(frozen=True)
class SPTree:
    root: int
    dist: dict[int, float]
    parent: dict[int, int | None]

    def path_to_root(self, node: int) -> list[int] | None:
        if self.dist.get(node, INF) == INF:
            return None
        path = [node]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return path

    def children(self) -> dict[int, list[int]]:
        kids: dict[int, list[int]] = defaultdict(list)
        for node, par in sorted(self.parent.items()):
            if par is not None:
                kids[par].append(node)
        return kids


def _same(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def shortest_paths(topology: Topology, root: int) -> SPTree:
    """Dijkstra by link cost; each node's parent is the smallest-id
    neighbour that lies on some shortest path to ``root``."""
    if root not in topology:
        raise UnknownNode(f"node {root} not in topology")
    dist = {n: INF for n in topology.nodes}
    dist[root] = 0.0
    heap = [(0.0, root)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v, link in topology.adj[u].items():
            nd = d + link.cost
            if nd < dist[v] and not _same(nd, dist[v]):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    parent: dict[int, int | None] = {}
    for v in topology.nodes:
        if v == root or dist[v] == INF:
            parent[v] = None
            continue
        parent[v] = min(
            u for u, link in topology.adj[v].items() if dist[u] != INF and _same(dist[u] + link.cost, dist[v])
        )
    return SPTree(root, dist, parent)


def hop_distances(topology: Topology, src: int) -> dict[int, int]:
    seen = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in topology.adj[u]:
            if v not in seen:
                seen[v] = seen[u] + 1
                queue.append(v)
    return seen


# -- scenario events -----------------------------------------------------------

@dataclass(frozen=True)
class Join:
    node: int
    uri: GroupUri


@dataclass(frozen=True)
class Leave:
    node: int
    uri: GroupUri


@dataclass(frozen=True)
class Publish:
    node: int
    uri: GroupUri
    payload: bytes = b""


@dataclass(frozen=True)
class SetStrategy:
    config: Any  # routing.StrategyConfig


Action = Union[Join, Leave, Publish, SetStrategy]


@dataclass(frozen=True)
class ScenarioEvent:
    time: float
    action: Action

    def __post_init__(self) -> None:
        if not self.time >= 0:
            raise ScenarioError(f"event time must be non-negative, got {self.time}")


def join(t: float, node: int, uri: GroupUri | str) -> ScenarioEvent:
    return ScenarioEvent(t, Join(node, as_uri(uri)))


def leave(t: float, node: int, uri: GroupUri | str) -> ScenarioEvent:
    return ScenarioEvent(t, Leave(node, as_uri(uri)))


def publish(t: float, node: int, uri: GroupUri | str, payload: bytes = b"") -> ScenarioEvent:
    return ScenarioEvent(t, Publish(node, as_uri(uri), payload))


@dataclass
class Scenario:
    events: list[ScenarioEvent]
    strategy: Any = None  # routing.StrategyConfig | None

    @classmethod
    def from_json(cls, data: Any) -> Scenario:
        from .routing import StrategyConfig

        if not isinstance(data, dict) or data.get("format") != FORMAT_VERSION:
            raise ScenarioError(f"scenario must carry \"format\": {FORMAT_VERSION}")
        strategy = StrategyConfig.from_json(data["strategy"]) if "strategy" in data else None
        events = []
        try:
            for raw in data["events"]:
                events.append(_event_from_json(raw))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(f"malformed event: {exc}") from exc
        return cls(events, strategy)

    @classmethod
    def load(cls, path: str | Path) -> Scenario:
        return cls.from_json(_load_json(path))

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"format": FORMAT_VERSION, "events": [_event_to_json(e) for e in self.events]}
        if self.strategy is not None:
            out["strategy"] = self.strategy.to_json()
        return out


def _event_from_json(raw: dict[str, Any]) -> ScenarioEvent:
    from .routing import StrategyConfig

    t = float(raw.get("t", 0.0))
    kind = raw["kind"]
    if kind == "join":
        return join(t, int(raw["node"]), raw["uri"])
    if kind == "leave":
        return leave(t, int(raw["node"]), raw["uri"])
    if kind == "publish":
        return publish(t, int(raw["node"]), raw["uri"], str(raw.get("payload", "")).encode("utf-8"))
    if kind == "set_strategy":
        return ScenarioEvent(t, SetStrategy(StrategyConfig.from_json(raw["strategy"])))
    raise ScenarioError(f"unknown event kind {kind!r}")


def _event_to_json(ev: ScenarioEvent) -> dict[str, Any]:
    a = ev.action
    if isinstance(a, SetStrategy):
        return {"t": ev.time, "kind": "set_strategy", "strategy": a.config.to_json()}
    kind = {Join: "join", Leave: "leave", Publish: "publish"}[type(a)]
    out: dict[str, Any] = {"t": ev.time, "kind": kind, "node": a.node, "uri": str(a.uri)}
    if isinstance(a, Publish):
        out["payload"] = a.payload.decode("utf-8", "replace")
    return out


# -- packets and metrics -------------------------------------------------------

@dataclass(frozen=True)
class Packet:
    uri: GroupUri
    seq: int
    origin: int
    sender: str
    payload: bytes
    sent_at: float
    signed: SignedPacket | None = None

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.sender, str(self.uri), self.seq)


@dataclass(frozen=True)
class Copy:
    """One copy of a packet in flight; ``info`` is strategy-private."""

    packet: Packet
    hops: int = 0
    path: tuple[int, ...] = ()
    info: tuple = ()


@dataclass(frozen=True)
class DeliveryRecord:
    time: float
    node: int
    packet: Packet
    hops: int
    path: tuple[int, ...]
    verdict: Verdict | None


@dataclass
class RunMetrics:
    link_transmissions: int = 0
    max_link_stress: int = 0
    deliveries: dict[int, list[tuple[str, int]]] = field(default_factory=dict)
    duplicate_count: int = 0
    control_messages: int = 0
    mean_path_stretch: float = 0.0
    publishes: int = 0
    expected_deliveries: int = 0
    disconnected_subscribers: int = 0
    rejected_packets: int = 0
    link_load: dict[tuple[int, int], int] = field(default_factory=dict)
    _stretch_sum: float = field(default=0.0, repr=False)

    @property
    def delivery_count(self) -> int:
        return sum(len(v) for v in self.deliveries.values())

    def to_json(self) -> dict[str, Any]:
        return {
            "link_transmissions": self.link_transmissions,
            "max_link_stress": self.max_link_stress,
            "deliveries": {
                str(node): [[uri, seq] for uri, seq in items] for node, items in sorted(self.deliveries.items())
            },
            "delivery_count": self.delivery_count,
            "duplicate_count": self.duplicate_count,
            "control_messages": self.control_messages,
            "mean_path_stretch": round(self.mean_path_stretch, 6),
            "publishes": self.publishes,
            "expected_deliveries": self.expected_deliveries,
            "disconnected_subscribers": self.disconnected_subscribers,
            "rejected_packets": self.rejected_packets,
        }

    def link_table(self) -> list[tuple[int, int, int]]:
        return [(u, v, n) for (u, v), n in sorted(self.link_load.items())]


# -- the engine ----------------------------------------------------------------

class Simulation:
    """Event loop, membership registry and metric collection for one run.

    Strategies are bound per scheme (``bindings``), falling back to the
    default strategy. With ``sign=True`` every scenario publish is signed by
    a per-origin identity derived from ``seed``.
    """

    def __init__(
        self,
        topology: Topology,
        strategy: Any = "rpf",
        *,
        bindings: Mapping[str, Any] | None = None,
        seed: int = 0,
        sign: bool = False,
        verify_every_hop: bool = False,
    ):
        from .routing import StrategyConfig

        self.topology = topology
        self.seed = seed
        self.sign = sign
        self.verify_every_hop = verify_every_hop
        self.now = 0.0
        self.metrics = RunMetrics()
        self.log: list[DeliveryRecord] = []
        self.memberships: dict[int, Counter[GroupUri]] = defaultdict(Counter)
        self.registered: set[GroupUri] = set()
        self.tamper: Callable[[Packet, int, int], Packet] | None = None
        self.on_deliver: Callable[[DeliveryRecord], None] | None = None
        self._default = StrategyConfig.coerce(strategy)
        self._bindings = {k.lower(): StrategyConfig.coerce(v) for k, v in (bindings or {}).items()}
        self._strategies: dict[Any, Any] = {}
        self._queue: list[tuple[float, int, Callable[[], None]]] = []
        self._tick = itertools.count()
        self._spt: dict[int, SPTree] = {}
        self._hops: dict[int, dict[int, int]] = {}
        self._seen: dict[int, set] = defaultdict(set)
        self._stress: Counter = Counter()
        self._seq: Counter = Counter()
        self._identities: dict[int, GroupIdentity] = {}

    # topology helpers, cached
    def spt(self, root: int) -> SPTree:
        if root not in self._spt:
            self._spt[root] = shortest_paths(self.topology, root)
        return self._spt[root]

    def min_hops(self, src: int, dst: int) -> int:
        if src not in self._hops:
            self._hops[src] = hop_distances(self.topology, src)
        return self._hops[src].get(dst, -1)

    def route(self, src: int, dst: int) -> list[int] | None:
        """Unicast path src..dst following next hops toward ``dst``."""
        return self.spt(dst).path_to_root(src)

    def check_node(self, node: int) -> None:
        if node not in self.topology:
            raise UnknownNode(f"node {node} not in topology")

    # strategy selection
    def strategy_for(self, uri: GroupUri):
        from .routing import make_strategy

        config = self._bindings.get(uri.scheme, self._default)
        if config not in self._strategies:
            self._strategies[config] = make_strategy(config, self)
        return self._strategies[config]

    def set_strategy(self, config: Any) -> None:
        """Swap the default strategy and rebuild its state from memberships."""
        from .routing import StrategyConfig

        config = StrategyConfig.coerce(config)
        old = self._default
        self._default = config
        if old != config:
            self._strategies.pop(old, None)
        for node, uri in self._membership_items():
            if uri.scheme not in self._bindings:
                self.strategy_for(uri).join(node, uri)

    def _membership_items(self) -> list[tuple[int, GroupUri]]:
        return [(n, u) for n in sorted(self.memberships) for u in sorted(self.memberships[n], key=str)]

    # membership
    def join(self, node: int, uri: GroupUri | str) -> None:
        from .errors import WildcardSubscription

        self.check_node(node)
        uri = as_uri(uri)
        if uri.is_wildcard:
            raise WildcardSubscription(f"cannot subscribe to wildcard {uri}")
        first = self.memberships[node][uri] == 0
        if first:
            self.strategy_for(uri).join(node, uri)
        self.memberships[node][uri] += 1

    def leave(self, node: int, uri: GroupUri | str) -> bool:
        self.check_node(node)
        uri = as_uri(uri)
        if self.memberships[node][uri] == 0:
            return False
        self.memberships[node][uri] -= 1
        if self.memberships[node][uri] == 0:
            del self.memberships[node][uri]
            self.strategy_for(uri).leave(node, uri)
        return True

    def subscribed(self, node: int, pub: GroupUri) -> bool:
        return any(covers(sub, pub) for sub in self.memberships.get(node, ()))

    def covering_nodes(self, pub: GroupUri) -> list[int]:
        return [n for n in sorted(self.memberships) if self.subscribed(n, pub)]

    def active_groups(self) -> set[GroupUri]:
        groups = {u for c in self.memberships.values() for u in c if u.is_concrete}
        return groups | self.registered

    # publishing
    def identity_for(self, node: int) -> GroupIdentity:
        if node not in self._identities:
            seed = hashlib.sha256(f"namecast:{self.seed}:{node}".encode()).digest()
            self._identities[node] = create_group_identity(seed, 0)
        return self._identities[node]

    def publish(
        self,
        node: int,
        uri: GroupUri | str,
        payload: bytes = b"",
        *,
        sender: str | None = None,
        signer: Callable[[GroupUri, int], SignedPacket | None] | None = None,
    ) -> list[Packet]:
        """Publish now. Wildcards expand over active groups first.

        ``signer(uri, seq)`` builds the signed form of each logical packet;
        it may raise to abort before anything is transmitted.
        """
        self.check_node(node)
        uri = as_uri(uri)
        targets = sorted(expand_wildcard(uri, self.active_groups()), key=str) if uri.is_wildcard else [uri]
        # sockets number per (sender, group); anonymous scenario publishes
        # share one counter per group so (group, seq) names a packet
        counter_owner = sender
        sender = sender or f"n{node}"
        planned = []
        for target in targets:
            seq = self._seq[(counter_owner, str(target))]
            if signer is not None:
                signed = signer(target, seq)
            elif self.sign:
                signed = sign_packet(self.identity_for(node), None, str(target), seq, payload)
            else:
                signed = None
            planned.append(Packet(target, seq, node, sender, bytes(payload), self.now, signed))
        sent = []
        for pkt in planned:
            self._seq[(counter_owner, str(pkt.uri))] += 1
            if not pkt.uri.is_wildcard:
                self.registered.add(pkt.uri)
            if self._publish_one(pkt):
                sent.append(pkt)
        return sent

    def _publish_one(self, pkt: Packet) -> bool:
        if pkt.signed is not None and verify_packet(pkt.signed, self.now) is not Verdict.ACCEPTED:
            self.metrics.rejected_packets += 1
            return False
        self.metrics.publishes += 1
        self.metrics.expected_deliveries += len(self.covering_nodes(pkt.uri))
        self._seen[pkt.origin].add(pkt.key)
        if self.subscribed(pkt.origin, pkt.uri):
            self._record(pkt.origin, Copy(pkt, 0, (pkt.origin,)))
        self.strategy_for(pkt.uri).publish(pkt.origin, pkt)
        return True

    # transit
    def transmit(self, strategy, copy: Copy, u: int, v: int) -> None:
        link = self.topology.link(u, v)
        pkt = copy.packet
        if self.tamper is not None:
            pkt = self.tamper(pkt, u, v)
        m = self.metrics
        m.link_transmissions += 1
        key = (min(u, v), max(u, v))
        m.link_load[key] = m.link_load.get(key, 0) + 1
        self._stress[(copy.packet.key, u, v)] += 1
        m.max_link_stress = max(m.max_link_stress, self._stress[(copy.packet.key, u, v)])
        moved = replace(copy, packet=pkt, hops=copy.hops + 1, path=copy.path + (v,))
        self.schedule(self.now + link.delay, lambda: self._arrive(strategy, v, moved))

    def _arrive(self, strategy, node: int, copy: Copy) -> None:
        signed = copy.packet.signed
        if self.verify_every_hop and signed is not None:
            if verify_packet(signed, self.now) is not Verdict.ACCEPTED:
                self.metrics.rejected_packets += 1
                return
        strategy.arrive(node, copy)

    def deliver(self, node: int, copy: Copy) -> None:
        """Hand a copy to ``node``'s local subscribers (if they cover it)."""
        pkt = copy.packet
        if node == pkt.origin or not self.subscribed(node, pkt.uri):
            return
        if pkt.key in self._seen[node]:
            self.metrics.duplicate_count += 1
            return
        self._seen[node].add(pkt.key)
        self._record(node, copy)

    def _record(self, node: int, copy: Copy) -> None:
        pkt = copy.packet
        verdict = verify_packet(pkt.signed, self.now) if pkt.signed is not None else None
        rec = DeliveryRecord(self.now, node, pkt, copy.hops, copy.path, verdict)
        if verdict is None or verdict is Verdict.ACCEPTED:
            m = self.metrics
            m.deliveries.setdefault(node, []).append((str(pkt.uri), pkt.seq))
            shortest = self.min_hops(pkt.origin, node)
            m._stretch_sum += copy.hops / shortest if shortest > 0 else 1.0
            m.mean_path_stretch = m._stretch_sum / m.delivery_count
            self.log.append(rec)
        else:
            self.metrics.rejected_packets += 1
        if self.on_deliver is not None:
            self.on_deliver(rec)

    # event loop
    def schedule(self, time: float, fn: Callable[[], None]) -> None:
        heapq.heappush(self._queue, (time, next(self._tick), fn))

    def add_events(self, events: Iterable[ScenarioEvent]) -> None:
        for ev in sorted(events, key=lambda e: e.time):
            self.schedule(ev.time, lambda a=ev.action: self._apply(a))

    def _apply(self, action: Action) -> None:
        if isinstance(action, Join):
            self.join(action.node, action.uri)
        elif isinstance(action, Leave):
            self.leave(action.node, action.uri)
        elif isinstance(action, Publish):
            self.publish(action.node, action.uri, action.payload)
        else:
            self.set_strategy(action.config)

    def pending(self) -> bool:
        return bool(self._queue)

    def next_time(self) -> float:
        return self._queue[0][0] if self._queue else INF

    def step(self) -> None:
        time, _, fn = heapq.heappop(self._queue)
        self.now = max(self.now, time)
        fn()

    def run_until(self, horizon: float = INF, stop: Callable[[], bool] | None = None) -> None:
        while self._queue and self._queue[0][0] <= horizon:
            self.step()
            if stop is not None and stop():
                return
        if horizon != INF:
            self.now = max(self.now, horizon)


def run(topology: Topology, events: Iterable[ScenarioEvent], strategy: Any = "rpf", seed: int = 0, **kw) -> RunMetrics:
    sim = Simulation(topology, strategy, seed=seed, **kw)
    sim.add_events(events)
    sim.run_until()
    return sim.metrics
