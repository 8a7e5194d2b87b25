import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from gen import endpoints, group_uris, labels, words
from namecast.bloom import BloomFilter
from namecast.errors import NotAWildcard, WildcardSubscription
from namecast.matching import covers, expand_wildcard, group_covers, inst_covers, match
from namecast.naming import Empty, ExplicitSet, FilterSet, GroupUri, Single, parse

P = parse


def test_aggregation_chain():
    assert group_covers(["blockbuster"], ["Q2", "blockbuster"])
    assert group_covers(["Q2", "blockbuster"], ["EL1", "Q2", "blockbuster"])
    assert not group_covers(["EL1", "Q2", "blockbuster"], ["blockbuster"])
    assert covers(P("opaque://blockbuster"), P("opaque://EL1.Q2.blockbuster"))


def test_source_aggregation():
    sub = P("opaque://news")
    assert covers(sub, P("opaque://news@cnn.com"))
    assert covers(sub, P("opaque://news@bbc.co.uk"))
    assert not covers(P("opaque://news@cnn.com"), P("opaque://politics@cnn.com"))


def test_instantiation_variants():
    assert inst_covers(Empty(), "anything")
    assert inst_covers(Single("cnn.com"), "cnn.com")
    assert not inst_covers(Single("com"), "cnn.com")
    s = ExplicitSet(frozenset({"cnn.com", "bbc.co.uk"}))
    assert inst_covers(s, "bbc.co.uk") and not inst_covers(s, "reuters.com")
    bf = FilterSet(BloomFilter.from_elements(["cnn.com"], 256, 4))
    assert inst_covers(bf, "cnn.com")
    # a named-source subscription cannot be served by an unnamed publication
    assert not inst_covers(Single("cnn.com"), None)


def test_ports():
    assert covers(P("opaque://news"), P("opaque://news:80"))
    assert covers(P("opaque://news:80"), P("opaque://news:80"))
    assert not covers(P("opaque://news:80"), P("opaque://news:81"))
    assert not covers(P("opaque://news:80"), P("opaque://news"))


def test_cross_scheme_is_false_with_reason():
    m = match(P("sip://news"), P("opaque://news"))
    assert not m and m.reason == "incomparable-schemes"


def test_credentials_do_not_affect_coverage():
    assert covers(P("opaque://news/abc"), P("opaque://news@cnn.com/xyz"))


def test_wildcard_subscription_rejected():
    with pytest.raises(WildcardSubscription):
        covers(P("opaque://*@cnn.com"), P("opaque://news@cnn.com"))


def test_selective_broadcast():
    active = {P("opaque://politics@cnn.com"), P("opaque://economics@cnn.com"), P("opaque://news@bbc.co.uk")}
    assert expand_wildcard(P("opaque://*@cnn.com"), active) == {
        P("opaque://politics@cnn.com"),
        P("opaque://economics@cnn.com"),
    }
    assert expand_wildcard(P("opaque://*@cnn.com"), set()) == set()
    g = P("opaque://EL1.Q1.blockbuster@studio.example")
    assert expand_wildcard(P("opaque://*.blockbuster@studio.example"), {g, P("opaque://blockbuster@studio.example")}) == {g}
    with pytest.raises(NotAWildcard):
        expand_wildcard(P("opaque://news@cnn.com"), active)


# -- properties ----------------------------------------------------------------

concrete = group_uris(wildcard=False, concrete=True)


@given(concrete)
def test_reflexive(u):
    assert covers(u, u)


@given(group_uris(wildcard=False), group_uris(wildcard=False), concrete)
def test_transitive(a, b, c):
    if b.is_concrete and covers(a, b) and covers(b, c):
        assert covers(a, c)


@given(st.lists(words, min_size=1, max_size=3), st.lists(words, max_size=3), st.data())
def test_transitive_on_related_triples(base, extra, data):
    # built so that a covers b covers c, then checked for a covers c
    cut = data.draw(st.integers(0, len(extra)))
    a = GroupUri("opaque", tuple(base))
    b = GroupUri("opaque", tuple(extra[cut:]) + tuple(base))
    c = GroupUri("opaque", tuple(extra) + tuple(base), Single("x.y"))
    assert covers(a, b) and covers(b, c) and covers(a, c)


@given(group_uris(wildcard=False), concrete, words)
def test_monotone_under_refinement(a, b, label):
    if covers(a, b):
        finer = GroupUri(b.scheme, (label,) + b.group_labels, b.instantiation, b.port, b.sec_credentials)
        assert covers(a, finer)


@given(st.lists(endpoints, min_size=1, max_size=6, unique=True), endpoints, st.integers(0, 5))
def test_ssm_to_asm_continuity(pool, probe, cut):
    small = ExplicitSet(frozenset(pool[: max(1, cut)]))
    big = ExplicitSet(frozenset(pool))
    for sub, wider in ((small, big), (big, Empty())):
        if inst_covers(sub, probe):
            assert inst_covers(wider, probe)


@given(st.lists(endpoints, min_size=1, max_size=8, unique=True), endpoints, st.integers(8, 128), st.integers(1, 8))
def test_filter_is_superset_of_explicit_set(members, probe, m, k):
    explicit = ExplicitSet(frozenset(members))
    bloom = FilterSet(BloomFilter.from_elements(members, m, k))
    assert inst_covers(explicit, probe) == (probe in members)
    if inst_covers(explicit, probe):
        assert inst_covers(bloom, probe)


@given(group_uris(wildcard=True), st.lists(concrete, max_size=6))
def test_expansion_is_sound(pub, active):
    assume(pub.is_wildcard)
    rest = pub.group_labels[1:]
    for g in expand_wildcard(pub, active):
        assert g in active and g.scheme == pub.scheme
        assert g.instantiation == pub.instantiation
        assert len(g.group_labels) > len(rest)
        assert g.group_labels[len(g.group_labels) - len(rest):] == rest


@given(st.lists(words, max_size=2), st.lists(st.lists(words, min_size=1, max_size=3), max_size=5), endpoints)
def test_expansion_is_complete(rest, prefixes, ep):
    pub = GroupUri("opaque", ("*",) + tuple(rest), Single(ep))
    active = {GroupUri("opaque", tuple(p) + tuple(rest), Single(ep)) for p in prefixes}
    assert expand_wildcard(pub, active) == active
