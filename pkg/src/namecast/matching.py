"""Coverage of publications by subscriptions.

A shorter group name aggregates every more specific name it is a suffix of
(labels are stored most specific first), an instantiation set covers its
members, and a subscription without instantiation covers every source.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .bloom import bloom_member
from .errors import NotAWildcard, WildcardSubscription
from .naming import (
    WILDCARD,
    Empty,
    ExplicitSet,
    FilterSet,
    GroupUri,
    Instantiation,
    Single,
)


def group_covers(sub_labels: Sequence[str], pub_labels: Sequence[str]) -> bool:
    n = len(sub_labels)
    return n <= len(pub_labels) and tuple(pub_labels[len(pub_labels) - n:]) == tuple(sub_labels)


def inst_covers(sub_inst: Instantiation, pub_endpoint: str | None) -> bool:
    """``pub_endpoint`` is None for a publication without instantiation,
    which only an any-source subscription covers."""
    if isinstance(sub_inst, Empty):
        return True
    if pub_endpoint is None:
        return False
    if isinstance(sub_inst, Single):
        return sub_inst.endpoint == pub_endpoint
    if isinstance(sub_inst, ExplicitSet):
        return pub_endpoint in sub_inst.endpoints
    assert isinstance(sub_inst, FilterSet)
    return bloom_member(sub_inst.filter, pub_endpoint)


def pub_endpoint(pub: GroupUri) -> str | None:
    inst = pub.instantiation
    if isinstance(inst, Single):
        return inst.endpoint
    if isinstance(inst, Empty):
        return None
    raise ValueError(f"publication {pub} must name at most one instantiation endpoint")


@dataclass(frozen=True)
class Match:
    covers: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.covers


def match(sub: GroupUri, pub: GroupUri) -> Match:
    """Coverage with a diagnostic ``reason`` when it fails."""
    if sub.is_wildcard:
        raise WildcardSubscription(f"wildcards are publish-only: {sub}")
    if sub.scheme != pub.scheme:
        return Match(False, "incomparable-schemes")
    if pub.is_wildcard:
        raise ValueError(f"expand wildcard publications before matching: {pub}")
    if not group_covers(sub.group_labels, pub.group_labels):
        return Match(False, "group")
    if not inst_covers(sub.instantiation, pub_endpoint(pub)):
        return Match(False, "instantiation")
    if sub.port is not None and sub.port != pub.port:
        return Match(False, "port")
    return Match(True)


def covers(sub: GroupUri, pub: GroupUri) -> bool:
    return match(sub, pub).covers


def expand_wildcard(pub: GroupUri, active_groups: Iterable[GroupUri]) -> set[GroupUri]:
    """Concrete groups reached by a ``*``-publication.

    The wildcard stands for one or more leading labels; scheme and
    instantiation must be equal, and a port on the wildcard must match.
    """
    if not pub.is_wildcard:
        raise NotAWildcard(f"{pub} has no wildcard label")
    rest = pub.group_labels[1:]
    hits = set()
    for g in active_groups:
        if g.is_wildcard or g.scheme != pub.scheme:
            continue
        if g.instantiation != pub.instantiation:
            continue
        if pub.port is not None and g.port != pub.port:
            continue
        if len(g.group_labels) > len(rest) and group_covers(rest, g.group_labels):
            hits.add(g)
    return hits


__all__ = [
    "WILDCARD",
    "Match",
    "covers",
    "expand_wildcard",
    "group_covers",
    "inst_covers",
    "match",
    "pub_endpoint",
]
