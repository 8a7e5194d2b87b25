"""Name-oriented multicast: group URIs, coverage, self-certifying groups,
distribution strategies and a deterministic network simulator."""

from .errors import NamecastError
from .identity import (
    GroupIdentity,
    SignedPacket,
    SourceCertificate,
    SourceKeys,
    Verdict,
    create_group_identity,
    issue_certificate,
    sign_packet,
    verify_packet,
)
from .matching import covers, expand_wildcard, group_covers, inst_covers
from .middleware import Middleware, MSocket, ReceivedMessage, create_msocket
from .naming import GroupUri, canonicalize, default_map, parse, serialize
from .routing import StrategyConfig, dispatch
from .simnet import RunMetrics, ScenarioEvent, Simulation, Topology, run, shortest_paths

__version__ = "0.1.0"
