"""Group distribution strategies over the simulator.

Five policies turn subscriptions into forwarding state and publications
into link traversals:

``flood``      interest-blind broadcast along the origin's shortest-path tree
``rpf``        receiver-driven trees toward the source (SSM) or the RP (ASM)
``statedist``  bidirectional shared tree built by control messages only
``hybrid``     multicast push to edge caches, unicast pull by receivers
``reflector``  one unicast copy per receiver from a reflector node

Strategies hold no state of their own beyond the run they are bound to.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

from .bloom import bloom_member
from .errors import MissingRP, NoCaches, NoReflector, ScenarioError, UnknownStrategy
from .matching import covers, expand_wildcard
from .naming import Empty, ExplicitSet, FilterSet, GroupUri, Single, as_uri
from .simnet import Copy, Packet, RunMetrics, Simulation, SPTree, Topology

STRATEGIES = ("flood", "rpf", "statedist", "hybrid", "reflector")

_ALIASES = {"state-dist": "statedist", "hybrid-push-pull": "hybrid", "hybridpushpull": "hybrid"}


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str = "rpf"
    rp: int | None = None
    edge_caches: tuple[int, ...] = ()
    reflector: int | None = None

    def __post_init__(self) -> None:
        name = _ALIASES.get(self.strategy.lower(), self.strategy.lower())
        if name not in STRATEGIES:
            raise UnknownStrategy(f"unknown strategy {self.strategy!r}; expected one of {', '.join(STRATEGIES)}")
        object.__setattr__(self, "strategy", name)
        object.__setattr__(self, "edge_caches", tuple(sorted(set(self.edge_caches))))

    @classmethod
    def coerce(cls, value: Any) -> StrategyConfig:
        if isinstance(value, StrategyConfig):
            return value
        if isinstance(value, str):
            return cls(value)
        return cls.from_json(value)

    @classmethod
    def from_json(cls, data: Any) -> StrategyConfig:
        if isinstance(data, str):
            return cls(data)
        if not isinstance(data, Mapping) or "strategy" not in data:
            raise ScenarioError(f"strategy config needs a \"strategy\" field: {data!r}")
        try:
            caches = data.get("caches", data.get("edge_caches", ()))
            reflector = data.get("reflector", data.get("reflector_node"))
            return cls(
                str(data["strategy"]),
                None if data.get("rp") is None else int(data["rp"]),
                tuple(int(c) for c in caches),
                None if reflector is None else int(reflector),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, UnknownStrategy):
                raise
            raise ScenarioError(f"malformed strategy config: {exc}") from exc

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"strategy": self.strategy}
        if self.rp is not None:
            out["rp"] = self.rp
        if self.edge_caches:
            out["caches"] = list(self.edge_caches)
        if self.reflector is not None:
            out["reflector"] = self.reflector
        return out

    def with_overrides(self, **kw: Any) -> StrategyConfig:
        return replace(self, **{k: v for k, v in kw.items() if v is not None and v != ()})


# -- forwarding state ----------------------------------------------------------

@dataclass(frozen=True)
class TreeKey:
    sub: GroupUri
    root: int


@dataclass
class Entry:
    upstream: int | None
    out: set[int] = field(default_factory=set)
    local: int = 0


class ForwardingState:
    """Per-node tables mapping a tree key to its outgoing neighbours."""

    def __init__(self) -> None:
        self.tables: dict[int, dict[TreeKey, Entry]] = defaultdict(dict)

    def get(self, node: int, key: TreeKey) -> Entry | None:
        return self.tables.get(node, {}).get(key)

    def keys(self) -> set[TreeKey]:
        return {k for table in self.tables.values() for k in table}

    def nodes_for(self, key: TreeKey) -> list[int]:
        return sorted(n for n, table in self.tables.items() if key in table)

    def tree_edges(self, key: TreeKey) -> set[tuple[int, int]]:
        """Directed (upstream, downstream) pairs of one tree."""
        return {(n, c) for n, table in self.tables.items() if key in table for c in table[key].out}

    def is_empty(self) -> bool:
        return not any(self.tables.values())

    def graft(self, spt: SPTree, node: int, key: TreeKey) -> int:
        """Install ``node`` as a local member; returns join messages sent."""
        entry = self.get(node, key)
        created = entry is None
        if created:
            entry = self.tables[node][key] = Entry(spt.parent[node])
        entry.local += 1
        messages = 0
        while created and node != spt.root:
            up = spt.parent[node]
            messages += 1
            parent_entry = self.get(up, key)
            created = parent_entry is None
            if created:
                parent_entry = self.tables[up][key] = Entry(spt.parent[up])
            parent_entry.out.add(node)
            node = up
        return messages

    def prune(self, node: int, key: TreeKey) -> int:
        """Remove one local member; returns prune messages sent."""
        entry = self.get(node, key)
        if entry is None:
            return 0
        entry.local -= 1
        messages = 0
        while entry.local <= 0 and not entry.out:
            del self.tables[node][key]
            if not self.tables[node]:
                del self.tables[node]
            up = entry.upstream
            if up is None:
                break
            messages += 1
            entry = self.tables[up][key]
            entry.out.discard(node)
            node = up
        return messages


# -- strategies ----------------------------------------------------------------

class Strategy:
    name = ""

    def __init__(self, config: StrategyConfig, sim: Simulation):
        self.config = config
        self.sim = sim

    @property
    def topology(self) -> Topology:
        return self.sim.topology

    def join(self, node: int, sub: GroupUri) -> None:
        pass

    def leave(self, node: int, sub: GroupUri) -> None:
        pass

    def publish(self, origin: int, packet: Packet) -> None:
        raise NotImplementedError

    # unicast legs are source routed: info = ("uni", remaining route, then)
    def send_along(self, node: int, copy: Copy, route: list[int], then: tuple) -> None:
        if len(route) == 1:
            self.leg_end(node, copy, then)
        else:
            self.sim.transmit(self, replace(copy, info=("uni", tuple(route[1:]), then)), node, route[1])

    def arrive(self, node: int, copy: Copy) -> None:
        if copy.info and copy.info[0] == "uni":
            _, rest, then = copy.info
            self.send_along(node, copy, list(rest), then)
        else:
            self.tree_arrive(node, copy)

    def leg_end(self, node: int, copy: Copy, then: tuple) -> None:
        if then[0] == "deliver":
            self.sim.deliver(node, copy)
        else:
            raise ValueError(f"unhandled leg end {then!r}")

    def tree_arrive(self, node: int, copy: Copy) -> None:
        raise NotImplementedError

    def resolve(self, endpoint: str) -> int | None:
        return self.topology.resolve(endpoint)

    def reachable(self, a: int, b: int) -> bool:
        return self.sim.route(a, b) is not None


class Flood(Strategy):
    """Reverse-path broadcast: every node in the origin's component gets
    exactly one copy, along the origin's shortest-path tree."""

    name = "flood"

    def __init__(self, config: StrategyConfig, sim: Simulation):
        super().__init__(config, sim)
        self._children: dict[int, dict[int, list[int]]] = {}
        self._seen: dict[int, set] = defaultdict(set)

    def children(self, origin: int) -> dict[int, list[int]]:
        if origin not in self._children:
            self._children[origin] = self.sim.spt(origin).children()
        return self._children[origin]

    def publish(self, origin: int, packet: Packet) -> None:
        self._seen[origin].add(packet.key)
        copy = Copy(packet, 0, (origin,), ("flood", origin))
        for child in self.children(origin).get(origin, ()):
            self.sim.transmit(self, copy, origin, child)

    def tree_arrive(self, node: int, copy: Copy) -> None:
        if copy.packet.key in self._seen[node]:
            return
        self._seen[node].add(copy.packet.key)
        self.sim.deliver(node, copy)
        for child in self.children(copy.info[1]).get(node, ()):
            self.sim.transmit(self, copy, node, child)


class RPF(Strategy):
    """Subscriptions graft onto trees rooted at their sources (one tree per
    named source) or, without instantiation, at the rendezvous point."""

    name = "rpf"

    def __init__(self, config: StrategyConfig, sim: Simulation):
        super().__init__(config, sim)
        self.state = ForwardingState()

    def roots(self, sub: GroupUri) -> list[int]:
        inst = sub.instantiation
        if isinstance(inst, Empty):
            if self.config.rp is None:
                raise MissingRP(f"any-source group {sub} needs a rendezvous point")
            return [self.config.rp]
        if isinstance(inst, Single):
            candidates: Iterable[str] = [inst.endpoint]
        elif isinstance(inst, ExplicitSet):
            candidates = sorted(inst.endpoints)
        else:
            assert isinstance(inst, FilterSet)
            candidates = [name for name in sorted(self.topology.names) if bloom_member(inst.filter, name)]
        nodes = {self.resolve(ep) for ep in candidates}
        nodes.discard(None)
        return sorted(nodes)

    def join(self, node: int, sub: GroupUri) -> None:
        roots = [r for r in self.roots(sub) if self.reachable(node, r)]
        if not roots:
            self.sim.metrics.disconnected_subscribers += 1
        for root in roots:
            self.sim.metrics.control_messages += self.state.graft(self.sim.spt(root), node, TreeKey(sub, root))

    def leave(self, node: int, sub: GroupUri) -> None:
        for root in self.roots(sub):
            self.sim.metrics.control_messages += self.state.prune(node, TreeKey(sub, root))

    def matching_keys(self, pub: GroupUri) -> dict[int, frozenset[TreeKey]]:
        """Trees a publication must travel, by root.

        Source-named subscriptions are served from the tree rooted at the
        publication's own instantiation; any-source ones from the RP tree.
        """
        source = None
        if isinstance(pub.instantiation, Single):
            source = self.resolve(pub.instantiation.endpoint)
        by_root: dict[int, set[TreeKey]] = defaultdict(set)
        for key in self.state.keys():
            any_source = isinstance(key.sub.instantiation, Empty)
            wanted_root = self.config.rp if any_source else source
            if key.root == wanted_root and covers(key.sub, pub):
                by_root[key.root].add(key)
        return {root: frozenset(keys) for root, keys in sorted(by_root.items())}

    def publish(self, origin: int, packet: Packet) -> None:
        for root, keys in self.matching_keys(packet.uri).items():
            route = self.sim.route(origin, root)
            if route is None:
                continue
            self.send_along(origin, Copy(packet, 0, (origin,)), route, ("tree", root, keys))

    def leg_end(self, node: int, copy: Copy, then: tuple) -> None:
        if then[0] == "tree":
            self.tree_arrive(node, replace(copy, info=then))
        else:
            super().leg_end(node, copy, then)

    def tree_arrive(self, node: int, copy: Copy) -> None:
        _, root, keys = copy.info
        out: set[int] = set()
        member = False
        for key in keys:
            entry = self.state.get(node, key)
            if entry is not None:
                out |= entry.out
                member = member or entry.local > 0
        if member:
            self.sim.deliver(node, copy)
        for nxt in sorted(out):
            self.sim.transmit(self, copy, node, nxt)

    def tree_edges(self, sub: GroupUri, root: int) -> set[tuple[int, int]]:
        return self.state.tree_edges(TreeKey(sub, root))


class StateDist(RPF):
    """Shared bidirectional tree at the RP, maintained by control messages.

    Each membership change grafts or prunes the member and then pushes the
    group's state to every on-tree node. Publishing needs no control
    traffic and installs no per-source state.
    """

    name = "statedist"

    def rp(self) -> int:
        if self.config.rp is None:
            raise MissingRP("state distribution needs a rendezvous point")
        return self.config.rp

    def roots(self, sub: GroupUri) -> list[int]:
        return [self.rp()]

    def _sync(self, key: TreeKey) -> None:
        self.sim.metrics.control_messages += len(self.state.nodes_for(key))

    def join(self, node: int, sub: GroupUri) -> None:
        super().join(node, sub)
        key = TreeKey(sub, self.rp())
        if self.state.get(node, key) is not None:
            self._sync(key)

    def leave(self, node: int, sub: GroupUri) -> None:
        super().leave(node, sub)
        self._sync(TreeKey(sub, self.rp()))

    def matching_keys(self, pub: GroupUri) -> dict[int, frozenset[TreeKey]]:
        keys = frozenset(k for k in self.state.keys() if covers(k.sub, pub))
        return {self.rp(): keys} if keys else {}

    def _on_tree(self, node: int, keys: frozenset[TreeKey]) -> bool:
        return any(self.state.get(node, k) is not None for k in keys)

    def publish(self, origin: int, packet: Packet) -> None:
        for rp, keys in self.matching_keys(packet.uri).items():
            route = self.sim.route(origin, rp)
            if route is None:
                continue
            # travel toward the RP only until the first on-tree node
            cut = next(i for i, n in enumerate(route) if self._on_tree(n, keys))
            self.send_along(origin, Copy(packet, 0, (origin,)), route[:cut + 1], ("tree", rp, keys))

    def tree_arrive(self, node: int, copy: Copy) -> None:
        _, _, keys = copy.info
        came_from = copy.path[-2] if len(copy.path) > 1 else None
        neighbours: set[int] = set()
        member = False
        for key in keys:
            entry = self.state.get(node, key)
            if entry is not None:
                neighbours |= entry.out
                if entry.upstream is not None:
                    neighbours.add(entry.upstream)
                member = member or entry.local > 0
        if member:
            self.sim.deliver(node, copy)
        neighbours.discard(came_from)
        for nxt in sorted(neighbours):
            self.sim.transmit(self, copy, node, nxt)


class HybridPushPull(Strategy):
    """Push to edge caches along the origin's tree, then unicast pull.

    A group URI whose instantiation resolves to nodes names its caches;
    otherwise the configured edge caches are used.
    """

    name = "hybrid"

    def caches_for(self, uri: GroupUri) -> list[int]:
        inst = uri.instantiation
        named: Iterable[str] = ()
        if isinstance(inst, Single):
            named = [inst.endpoint]
        elif isinstance(inst, ExplicitSet):
            named = inst.endpoints
        nodes = sorted({n for n in (self.resolve(ep) for ep in named) if n is not None})
        if nodes:
            return nodes
        if not self.config.edge_caches:
            raise NoCaches(f"no edge caches for {uri}")
        return list(self.config.edge_caches)

    def nearest_cache(self, node: int, caches: list[int]) -> int | None:
        best = min(caches, key=lambda c: (self.sim.spt(c).dist[node], c))
        return None if self.sim.spt(best).dist[node] == float("inf") else best

    def _register(self, node: int, sub: GroupUri) -> None:
        try:
            cache = self.nearest_cache(node, self.caches_for(sub))
        except NoCaches:
            cache = None
        if cache is None:
            self.sim.metrics.disconnected_subscribers += 1
            return
        self.sim.metrics.control_messages += len(self.sim.route(node, cache)) - 1

    join = _register
    leave = _register

    def publish(self, origin: int, packet: Packet) -> None:
        caches = self.caches_for(packet.uri)
        assigned: dict[int, list[int]] = defaultdict(list)
        for sub in self.sim.covering_nodes(packet.uri):
            if sub == origin:
                continue
            cache = self.nearest_cache(sub, caches)
            if cache is not None and self.reachable(origin, cache):
                assigned[cache].append(sub)
        # push tree: union of the active caches' paths toward the origin
        spt = self.sim.spt(origin)
        down: dict[int, set[int]] = defaultdict(set)
        for cache in assigned:
            path = spt.path_to_root(cache)
            for child, parent in zip(path, path[1:]):
                down[parent].add(child)
        plan = (
            tuple(sorted((n, tuple(sorted(c))) for n, c in down.items())),
            tuple(sorted((c, tuple(s)) for c, s in assigned.items())),
        )
        self.tree_arrive(origin, Copy(packet, 0, (origin,), ("push",) + plan))

    def tree_arrive(self, node: int, copy: Copy) -> None:
        _, down, assigned = copy.info
        for sub in dict(assigned).get(node, ()):
            self.send_along(node, replace(copy, info=()), self.sim.route(node, sub), ("deliver",))
        for child in dict(down).get(node, ()):
            self.sim.transmit(self, copy, node, child)


class Reflector(Strategy):
    """Origin unicasts to the reflector, which unicasts one copy per
    subscriber. The reflector named as a group's instantiation wins over
    the configured one."""

    name = "reflector"

    def reflector_for(self, uri: GroupUri) -> int:
        if isinstance(uri.instantiation, Single):
            node = self.resolve(uri.instantiation.endpoint)
            if node is not None:
                return node
        if self.config.reflector is None:
            raise NoReflector(f"no reflector for {uri}")
        return self.config.reflector

    def _register(self, node: int, sub: GroupUri) -> None:
        # subscribing never fails for lack of a reflector; publishing does
        try:
            route = self.sim.route(node, self.reflector_for(sub))
        except NoReflector:
            route = None
        if route is None:
            self.sim.metrics.disconnected_subscribers += 1
        else:
            self.sim.metrics.control_messages += len(route) - 1

    join = _register
    leave = _register

    def publish(self, origin: int, packet: Packet) -> None:
        refl = self.reflector_for(packet.uri)
        route = self.sim.route(origin, refl)
        if route is None:
            return
        subs = tuple(n for n in self.sim.covering_nodes(packet.uri) if n != origin)
        self.send_along(origin, Copy(packet, 0, (origin,)), route, ("reflect", subs))

    def leg_end(self, node: int, copy: Copy, then: tuple) -> None:
        if then[0] != "reflect":
            return super().leg_end(node, copy, then)
        for sub in then[1]:
            route = self.sim.route(node, sub)
            if route is not None:
                self.send_along(node, copy, route, ("deliver",))


_REGISTRY = {cls.name: cls for cls in (Flood, RPF, StateDist, HybridPushPull, Reflector)}


def make_strategy(config: StrategyConfig, sim: Simulation) -> Strategy:
    return _REGISTRY[config.strategy](config, sim)


# -- single-packet helpers -----------------------------------------------------

def dispatch(
    pub_uri: GroupUri | str, subscriptions: Mapping[int, Iterable[GroupUri | str]]
) -> dict[GroupUri, set[int]]:
    """Logical publications and the subscribers each one reaches."""
    pub = as_uri(pub_uri)
    subs = {node: [as_uri(s) for s in uris] for node, uris in subscriptions.items()}
    if pub.is_wildcard:
        active = {s for uris in subs.values() for s in uris if s.is_concrete}
        targets = expand_wildcard(pub, active)
    else:
        targets = {pub}
    return {t: {n for n, uris in subs.items() if any(covers(s, t) for s in uris)} for t in targets}


def _one_shot(
    topology: Topology,
    config: StrategyConfig,
    members: Iterable[int],
    origin: int,
    group: GroupUri | str,
    payload: bytes = b"",
) -> RunMetrics:
    sim = Simulation(topology, config)
    group = as_uri(group)
    for node in sorted(set(members)):
        sim.join(node, group)
    sim.publish(origin, group, payload)
    sim.run_until()
    return sim.metrics


DEFAULT_GROUP = "opaque://group"


def flood_deliver(topology: Topology, members: Iterable[int], origin: int, group: GroupUri | str = DEFAULT_GROUP) -> RunMetrics:
    return _one_shot(topology, StrategyConfig("flood"), members, origin, group)


def rpf_deliver(
    topology: Topology, subscribers: Iterable[int], origin: int, group: GroupUri | str, rp: int | None = None
) -> RunMetrics:
    return _one_shot(topology, StrategyConfig("rpf", rp=rp), subscribers, origin, group)


def rpf_tree(topology: Topology, subscribers: Iterable[int], root: int) -> set[tuple[int, int]]:
    """Edges of the RPF tree that ``subscribers`` build toward ``root``."""
    sim = Simulation(topology, StrategyConfig("rpf"))
    group = GroupUri("opaque", ("tree",), Single(f"n{root}"))
    for node in sorted(set(subscribers)):
        sim.join(node, group)
    strategy = sim.strategy_for(group)
    return strategy.tree_edges(group, root)


def statedist_sync(
    topology: Topology, memberships: Iterable[int], rp: int, group: GroupUri | str = DEFAULT_GROUP
) -> Simulation:
    """A simulation whose shared tree for ``group`` is built; no data yet."""
    sim = Simulation(topology, StrategyConfig("statedist", rp=rp))
    for node in sorted(set(memberships)):
        sim.join(node, group)
    return sim


def hybrid_deliver(
    topology: Topology,
    edge_caches: Iterable[int],
    subscribers: Iterable[int],
    origin: int,
    group: GroupUri | str = DEFAULT_GROUP,
) -> RunMetrics:
    return _one_shot(topology, StrategyConfig("hybrid", edge_caches=tuple(edge_caches)), subscribers, origin, group)


def reflector_deliver(
    topology: Topology,
    reflector: int,
    subscribers: Iterable[int],
    origin: int,
    group: GroupUri | str = DEFAULT_GROUP,
) -> RunMetrics:
    return _one_shot(topology, StrategyConfig("reflector", reflector=reflector), subscribers, origin, group)
