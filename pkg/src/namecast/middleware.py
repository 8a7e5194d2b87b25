"""Technology-transparent multicast sockets.

Applications name groups by URI only; the scheme selects the distribution
strategy. Receiving follows push semantics: a silent group is not an
error, ``receive`` simply returns ``None`` when nothing arrived in time.
Malformed names, on the other hand, always fail at the API boundary.

    mw = Middleware(topology)
    ms = mw.create_msocket(3)
    ms.join("mcast-ip://224.10.20.30@1.2.3.4")
    msg = ms.receive(timeout=5.0)
"""

from __future__ import annotations

import itertools
from collections import Counter, deque
from dataclasses import dataclass
from typing import Mapping

from .errors import NotSubscribed, UnknownNode, WildcardSubscription
from .identity import GroupIdentity, SourceCertificate, SourceKeys, Verdict, sign_packet
from .matching import covers
from .naming import GroupUri, parse
from .routing import StrategyConfig
from .simnet import DeliveryRecord, Simulation, Topology

DEFAULT_BINDINGS = {"mcast-ip": "rpf", "sip": "reflector", "opaque": "rpf"}


@dataclass(frozen=True)
class ReceivedMessage:
    group_uri: GroupUri
    payload: bytes
    source_node: int
    seq: int
    verified: Verdict | None


class MSocket:
    def __init__(self, mw: Middleware, socket_id: int, node: int, deliver_unverified: bool = False):
        self.mw = mw
        self.socket_id = socket_id
        self.node = node
        self.deliver_unverified = deliver_unverified
        self.subscriptions: set[GroupUri] = set()
        self.queue: deque[ReceivedMessage] = deque()
        self.dropped = 0
        self._seen: set = set()

    def __repr__(self) -> str:
        return f"<MSocket {self.socket_id} on node {self.node}: {len(self.subscriptions)} subscriptions>"

    @property
    def bindings(self) -> dict[str, StrategyConfig]:
        return dict(self.mw.bindings)

    def join(self, uri: str | GroupUri) -> None:
        group = _as_uri(uri)
        if group.is_wildcard:
            raise WildcardSubscription(f"wildcards are publish-only: {group}")
        if group in self.subscriptions:
            return
        self.mw.sim.join(self.node, group)
        self.subscriptions.add(group)

    def leave(self, uri: str | GroupUri) -> None:
        group = _as_uri(uri)
        if group not in self.subscriptions:
            raise NotSubscribed(f"socket {self.socket_id} is not subscribed to {group}")
        self.subscriptions.discard(group)
        self.mw.sim.leave(self.node, group)

    def send(
        self,
        uri: str | GroupUri,
        payload: bytes,
        signer: GroupIdentity | SourceKeys,
        cert: SourceCertificate | None = None,
    ) -> int:
        """Sign and publish; returns the number of logical packets sent
        (a wildcard name can reach several groups)."""
        group = _as_uri(uri)

        def sign(target: GroupUri, seq: int):
            return sign_packet(signer, cert, str(target), seq, payload)

        sent = self.mw.sim.publish(self.node, group, payload, sender=f"s{self.socket_id}", signer=sign)
        return len(sent)

    def receive(self, timeout: float = 0.0) -> ReceivedMessage | None:
        """Head of the queue, or ``None`` if nothing arrives within
        ``timeout`` simulated seconds."""
        if not self.queue:
            sim = self.mw.sim
            sim.run_until(sim.now + timeout, stop=lambda: bool(self.queue))
        return self.queue.popleft() if self.queue else None

    def close(self) -> None:
        for group in sorted(self.subscriptions, key=str):
            self.leave(group)
        self.mw.sockets.pop(self.socket_id, None)

    def _offer(self, rec: DeliveryRecord) -> None:
        pkt = rec.packet
        if not any(covers(sub, pkt.uri) for sub in self.subscriptions):
            return
        if pkt.key in self._seen:
            return
        self._seen.add(pkt.key)
        if rec.verdict is not None and rec.verdict is not Verdict.ACCEPTED and not self.deliver_unverified:
            self.dropped += 1
            return
        payload = pkt.signed.payload if pkt.signed is not None else pkt.payload
        self.queue.append(ReceivedMessage(pkt.uri, payload, pkt.origin, pkt.seq, rec.verdict))


def _as_uri(uri: str | GroupUri) -> GroupUri:
    return uri if isinstance(uri, GroupUri) else parse(uri)


class Middleware:
    """Sockets attached to one simulated network.

    Without a topology the middleware runs in loopback mode on a single
    node 0. ``rp`` defaults to the smallest node id so that any-source
    groups work out of the box.
    """

    def __init__(
        self,
        topology: Topology | None = None,
        *,
        bindings: Mapping[str, str | StrategyConfig] | None = None,
        rp: int | None = None,
        reflector: int | None = None,
        edge_caches: tuple[int, ...] = (),
        verify_every_hop: bool = False,
    ):
        self.topology = topology or Topology([0], [])
        if rp is None:
            rp = self.topology.nodes[0]
        params = dict(rp=rp, reflector=reflector, edge_caches=tuple(edge_caches))
        merged = {**DEFAULT_BINDINGS, **(bindings or {})}
        self.bindings = {
            scheme: StrategyConfig.coerce(cfg).with_overrides(**params) for scheme, cfg in merged.items()
        }
        self.sim = Simulation(
            self.topology,
            self.bindings["opaque"],
            bindings=self.bindings,
            verify_every_hop=verify_every_hop,
        )
        self.sim.on_deliver = self._on_deliver
        self.sockets: dict[int, MSocket] = {}
        self._ids = itertools.count(1)

    def create_msocket(self, node: int = 0, *, deliver_unverified: bool = False) -> MSocket:
        if node not in self.topology:
            raise UnknownNode(f"node {node} not in topology")
        sock = MSocket(self, next(self._ids), node, deliver_unverified)
        self.sockets[sock.socket_id] = sock
        return sock

    def advance(self, dt: float) -> None:
        self.sim.run_until(self.sim.now + dt)

    @property
    def now(self) -> float:
        return self.sim.now

    @property
    def metrics(self):
        return self.sim.metrics

    def drop_counts(self) -> Counter:
        return Counter({s.socket_id: s.dropped for s in self.sockets.values()})

    def _on_deliver(self, rec: DeliveryRecord) -> None:
        for sock in list(self.sockets.values()):
            if sock.node == rec.node:
                sock._offer(rec)


def create_msocket(mw: Middleware, node: int = 0) -> MSocket:
    return mw.create_msocket(node)
