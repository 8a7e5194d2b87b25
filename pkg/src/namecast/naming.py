"""Group URIs: ``scheme://group@instantiation:port/sec-credentials``.

Canonical text is the compatibility contract. Scheme and instantiation
endpoints are lowercased, group labels keep their case, explicit sets are
emitted sorted, and the port is printed after the instantiation clause
(it is also accepted directly after the group when parsing).
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass, field
from typing import Callable, Union

from .bloom import BloomFilter
from .errors import InvalidTechAddress, MalformedUri, NoDefaultMapping

WILDCARD = "*"

_SCHEME_RE = re.compile(r"[A-Za-z][A-Za-z0-9+.-]*\Z")
_LABEL_RE = re.compile(r"[A-Za-z0-9_-]+\Z")
_ENDPOINT_LABEL_RE = re.compile(r"[a-z0-9_-]+\Z")
_CRED_RE = re.compile(r"[A-Za-z0-9_-]+\Z")
_IPV4_RE = re.compile(r"\d{1,3}(\.\d{1,3}){3}\Z")
_BODY_RE = re.compile(
    r"""
    (?P<group>[^@:/{}]+)
    (?::(?P<port1>\d+))?
    (?:@(?P<inst>\{[^{}]*\}|bf:\d+:\d+:[A-Za-z0-9_-]*|[^:@/{}]+))?
    (?::(?P<port2>\d+))?
    \Z
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Empty:
    """No instantiation clause: any-source semantics."""


@dataclass(frozen=True)
class Single:
    endpoint: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "endpoint", canonical_endpoint(self.endpoint))


@dataclass(frozen=True)
class ExplicitSet:
    endpoints: frozenset[str]

    def __post_init__(self) -> None:
        members = frozenset(canonical_endpoint(e) for e in self.endpoints)
        if not members:
            raise MalformedUri("explicit instantiation set is empty")
        object.__setattr__(self, "endpoints", members)


@dataclass(frozen=True)
class FilterSet:
    filter: BloomFilter


Instantiation = Union[Empty, Single, ExplicitSet, FilterSet]


def canonical_endpoint(text: str) -> str:
    ep = text.lower()
    labels = ep.split(".")
    if not all(_ENDPOINT_LABEL_RE.match(lab) for lab in labels):
        raise MalformedUri(f"invalid instantiation endpoint {text!r}")
    return ep


def _check_labels(labels: tuple[str, ...]) -> None:
    if not labels:
        raise MalformedUri("empty group")
    if len(labels) == 1 and _IPV4_RE.match(labels[0]):
        return
    for pos, label in enumerate(labels):
        if label == WILDCARD:
            if pos != 0:
                raise MalformedUri("wildcard allowed only as the most specific label")
        elif not _LABEL_RE.match(label):
            raise MalformedUri(f"invalid group label {label!r}")


def split_group(text: str) -> tuple[str, ...]:
    """Split a group clause into labels, keeping an IPv4 literal atomic."""
    if not text:
        raise MalformedUri("empty group")
    if _IPV4_RE.match(text):
        return (text,)
    return tuple(text.split("."))


@dataclass(frozen=True)
class GroupUri:
    scheme: str
    group_labels: tuple[str, ...]
    instantiation: Instantiation = field(default_factory=Empty)
    port: int | None = None
    sec_credentials: str | None = None

    def __post_init__(self) -> None:
        if not _SCHEME_RE.match(self.scheme or ""):
            raise MalformedUri(f"invalid scheme {self.scheme!r}")
        object.__setattr__(self, "scheme", self.scheme.lower())
        labels = tuple(self.group_labels)
        if len(labels) > 1 and _IPV4_RE.match(".".join(labels)):
            # four numeric labels print exactly like an IPv4 group address
            labels = (".".join(labels),)
        _check_labels(labels)
        object.__setattr__(self, "group_labels", labels)
        if self.port is not None and not 0 <= self.port <= 65535:
            raise MalformedUri(f"port {self.port} out of range")
        if self.sec_credentials is not None and not _CRED_RE.match(self.sec_credentials):
            raise MalformedUri("credentials must use the base64url alphabet")

    @property
    def group(self) -> str:
        return ".".join(self.group_labels)

    @property
    def is_wildcard(self) -> bool:
        return self.group_labels[0] == WILDCARD

    @property
    def is_concrete(self) -> bool:
        return not self.is_wildcard and isinstance(self.instantiation, (Empty, Single))

    def __str__(self) -> str:
        return serialize(self)


def parse(text: str) -> GroupUri:
    if "://" not in text:
        raise MalformedUri(f"missing '://' in {text!r}")
    scheme, rest = text.split("://", 1)
    if not _SCHEME_RE.match(scheme):
        raise MalformedUri(f"invalid scheme {scheme!r}")

    body, slash, cred = rest.partition("/")
    if slash and not _CRED_RE.match(cred):
        raise MalformedUri(f"invalid credentials {cred!r}")
    if body.count("{") != body.count("}"):
        raise MalformedUri("unbalanced set braces")
    if not body or body[0] in "@:":
        raise MalformedUri("empty group")

    m = _BODY_RE.match(body)
    if m is None:
        raise MalformedUri(f"cannot parse group clause {body!r}")
    if m["port1"] is not None and m["port2"] is not None:
        raise MalformedUri("port given twice")
    port_text = m["port1"] if m["port1"] is not None else m["port2"]
    port = int(port_text) if port_text is not None else None

    try:
        return GroupUri(
            scheme=scheme,
            group_labels=split_group(m["group"]),
            instantiation=_parse_instantiation(m["inst"]),
            port=port,
            sec_credentials=cred if slash else None,
        )
    except ValueError as exc:
        if isinstance(exc, MalformedUri):
            raise
        raise MalformedUri(str(exc)) from exc


def _parse_instantiation(text: str | None) -> Instantiation:
    if text is None:
        return Empty()
    if text.startswith("{"):
        members = text[1:-1].split(",")
        if any(not member for member in members):
            raise MalformedUri(f"empty member in set {text!r}")
        return ExplicitSet(frozenset(members))
    if text.startswith("bf:"):
        return FilterSet(BloomFilter.decode(text))
    return Single(text)


def serialize_instantiation(inst: Instantiation) -> str:
    if isinstance(inst, Empty):
        return ""
    if isinstance(inst, Single):
        return "@" + inst.endpoint
    if isinstance(inst, ExplicitSet):
        return "@{" + ",".join(sorted(inst.endpoints)) + "}"
    return "@" + inst.filter.encode()


def serialize(uri: GroupUri) -> str:
    out = [uri.scheme, "://", uri.group, serialize_instantiation(uri.instantiation)]
    if uri.port is not None:
        out.append(f":{uri.port}")
    if uri.sec_credentials is not None:
        out.append("/" + uri.sec_credentials)
    return "".join(out)


def canonicalize(text: str) -> str:
    return serialize(parse(text))


def as_uri(value: GroupUri | str) -> GroupUri:
    return value if isinstance(value, GroupUri) else parse(value)


# -- stateless default mapping ----------------------------------------------

@dataclass(frozen=True)
class TechBinding:
    technology: str
    address: str
    port: int | None = None


_MCAST_V4 = ipaddress.IPv4Network("224.0.0.0/4")


def _map_mcast_ip(uri: GroupUri) -> TechBinding:
    if len(uri.group_labels) != 1:
        raise InvalidTechAddress(f"{uri.group!r} is not an IPv4 group address")
    try:
        addr = ipaddress.IPv4Address(uri.group_labels[0])
    except ValueError:
        raise InvalidTechAddress(f"{uri.group!r} is not an IPv4 group address") from None
    if addr not in _MCAST_V4:
        raise InvalidTechAddress(f"{addr} is outside 224.0.0.0/4")
    return TechBinding("mcast-ip", str(addr), uri.port)


DEFAULT_MAPPINGS: dict[str, Callable[[GroupUri], TechBinding]] = {
    "mcast-ip": _map_mcast_ip,
}


def default_map(uri: GroupUri | str) -> TechBinding:
    uri = as_uri(uri)
    rule = DEFAULT_MAPPINGS.get(uri.scheme)
    if rule is None:
        raise NoDefaultMapping(f"scheme {uri.scheme!r} has no stateless mapping")
    return rule(uri)
