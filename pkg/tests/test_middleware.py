from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from namecast.errors import CertMismatch, MalformedUri, NotSubscribed, UnknownNode, WildcardSubscription
from namecast.identity import SourceKeys, Verdict, create_group_identity, issue_certificate
from namecast.middleware import Middleware, create_msocket
from namecast.naming import parse
from namecast.simnet import Topology

CTRL = create_group_identity(b"c" * 32, 0)
SSM = "mcast-ip://224.10.20.30@1.2.3.4/groupkey"


@pytest.fixture
def mw():
    topo = Topology.line(4, names={"1.2.3.4": 1, "psychic.org": 2, "cnn.com": 1})
    return Middleware(topo)


def test_create(mw):
    ms = create_msocket(mw, 1)
    assert ms.subscriptions == set() and ms.receive() is None
    with pytest.raises(UnknownNode):
        mw.create_msocket(99)


def test_two_sockets_have_independent_queues(mw):
    a, b = mw.create_msocket(3), mw.create_msocket(3)
    a.join("opaque://chat")
    mw.create_msocket(1).send("opaque://chat", b"hi", CTRL)
    assert a.receive(5).payload == b"hi"
    assert b.receive(5) is None


def test_join_is_idempotent_across_cosmetic_case(mw):
    ms = mw.create_msocket(3)
    ms.join(SSM)
    ms.join("MCAST-IP://224.10.20.30@1.2.3.4/groupkey")
    assert ms.subscriptions == {parse(SSM)}
    ms.join("sip://hypnotic-talks@psychic.org")
    assert len(ms.subscriptions) == 2


def test_join_leave_are_inverses(mw):
    ms = mw.create_msocket(3)
    before = set(ms.subscriptions)
    ms.join("opaque://x")
    ms.leave("opaque://x")
    assert ms.subscriptions == before
    with pytest.raises(NotSubscribed):
        ms.leave("opaque://x")
    with pytest.raises(NotSubscribed):
        ms.leave("opaque://never")


def test_join_errors(mw):
    ms = mw.create_msocket(3)
    with pytest.raises(MalformedUri):
        ms.join("not a uri")
    with pytest.raises(WildcardSubscription):
        ms.join("opaque://*@cnn.com")


def test_publish_then_receive_is_verified(mw):
    sub, pub = mw.create_msocket(4), mw.create_msocket(1)
    sub.join(SSM)
    cert = issue_certificate(CTRL, SourceKeys.from_seed(b"s" * 32).pub_key)
    assert pub.send(SSM, b"frame", SourceKeys.from_seed(b"s" * 32), cert) == 1
    msg = sub.receive(10)
    assert msg.payload == b"frame" and msg.verified is Verdict.ACCEPTED
    assert msg.source_node == 1 and msg.seq == 0


def test_aggregation_and_selective_broadcast(mw):
    sub = mw.create_msocket(4)
    sub.join("opaque://news")
    sender = mw.create_msocket(1)
    sender.send("opaque://news@cnn.com", b"n", CTRL)
    assert sub.receive(10).group_uri == parse("opaque://news@cnn.com")

    p, e = mw.create_msocket(3), mw.create_msocket(2)
    p.join("opaque://politics@cnn.com")
    e.join("opaque://economics@cnn.com")
    # news@cnn.com was published above, so it counts as a registered channel
    assert sender.send("opaque://*@cnn.com", b"all", CTRL) == 3
    assert p.receive(10).payload == b"all"
    assert e.receive(10).payload == b"all"
    assert sub.receive(10).group_uri == parse("opaque://news@cnn.com")
    assert sub.receive(10) is None


def test_silent_group_is_not_an_error(mw):
    ms = mw.create_msocket(3)
    ms.join("opaque://nobody-sends-here")
    assert ms.receive(timeout=30) is None
    assert mw.now >= 30


def test_cert_mismatch_sends_nothing(mw):
    sub = mw.create_msocket(4)
    sub.join("opaque://chat")
    alien = issue_certificate(CTRL, SourceKeys.from_seed(b"z" * 32).pub_key)
    with pytest.raises(CertMismatch):
        mw.create_msocket(1).send("opaque://chat", b"x", SourceKeys.from_seed(b"s" * 32), alien)
    assert mw.metrics.link_transmissions == 0
    assert sub.receive(10) is None


def _tamper(pkt, u, v):
    return replace(pkt, signed=replace(pkt.signed, payload=b"evil"))


def test_tampered_packet_dropped_and_counted(mw):
    sub = mw.create_msocket(4)
    sub.join("opaque://chat")
    mw.sim.tamper = _tamper
    mw.create_msocket(1).send("opaque://chat", b"good", CTRL)
    assert sub.receive(10) is None
    assert sub.dropped == 1 and mw.drop_counts()[sub.socket_id] == 1


def test_deliver_unverified_opt_in(mw):
    sub = mw.create_msocket(4, deliver_unverified=True)
    sub.join("opaque://chat")
    mw.sim.tamper = _tamper
    mw.create_msocket(1).send("opaque://chat", b"good", CTRL)
    msg = sub.receive(10)
    assert msg.payload == b"evil" and msg.verified is Verdict.BAD_SIGNATURE


def test_loopback_mode():
    mw = Middleware()
    a, b = mw.create_msocket(), mw.create_msocket()
    a.join("opaque://local")
    b.send("opaque://local", b"x", CTRL)
    assert a.receive().payload == b"x"


def test_scheme_bindings(mw):
    assert mw.bindings["mcast-ip"].strategy == "rpf"
    assert mw.bindings["sip"].strategy == "reflector"
    custom = Middleware(Topology.line(3), bindings={"opaque": "flood"})
    assert custom.bindings["opaque"].strategy == "flood"


@settings(max_examples=25)
@given(st.lists(st.sampled_from([1, 2]), min_size=1, max_size=12), st.sampled_from(["rpf", "flood", "statedist", "reflector", "hybrid"]))
def test_fifo_per_sender_and_no_crosstalk(senders, strategy):
    mw = Middleware(Topology.line(4), bindings={"opaque": strategy}, reflector=2, edge_caches=(3,))
    sub = mw.create_msocket(4)
    other = mw.create_msocket(4)
    sub.join("opaque://chat")
    other.join("opaque://other")
    socks = {1: mw.create_msocket(1), 2: mw.create_msocket(2)}
    for i, s in enumerate(senders):
        socks[s].send("opaque://chat", bytes([i]), CTRL)
        mw.advance(0.25)
    got = []
    while (msg := sub.receive(20)) is not None:
        got.append(msg)
    assert len(got) == len(senders)
    for node in (1, 2):
        seqs = [m.seq for m in got if m.source_node == node]
        assert seqs == list(range(len(seqs)))
    assert other.receive(20) is None
