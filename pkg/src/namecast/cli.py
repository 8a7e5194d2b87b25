"""Command line front end.

Every command prints one JSON object (sorted keys) and exits 0 on
success, 1 on a domain error (with ``{"error": ..., "message": ...}``) and
2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

from . import identity
from .errors import NamecastError
from .matching import match
from .naming import Empty, ExplicitSet, FilterSet, GroupUri, Single, default_map, parse
from .routing import STRATEGIES, StrategyConfig
from .simnet import RunMetrics, Scenario, Simulation, Topology

COMPARE_COLUMNS = (
    "link_transmissions",
    "max_link_stress",
    "delivery_count",
    "expected_deliveries",
    "duplicate_count",
    "control_messages",
    "mean_path_stretch",
    "disconnected_subscribers",
    "rejected_packets",
)


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _emit(text: str, out: str | None = None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _instantiation_json(inst) -> dict[str, Any]:
    if isinstance(inst, Empty):
        return {"kind": "empty"}
    if isinstance(inst, Single):
        return {"kind": "single", "endpoint": inst.endpoint}
    if isinstance(inst, ExplicitSet):
        return {"kind": "set", "endpoints": sorted(inst.endpoints)}
    assert isinstance(inst, FilterSet)
    return {"kind": "bloom", "m": inst.filter.m, "k": inst.filter.k}


def uri_json(uri: GroupUri) -> dict[str, Any]:
    return {
        "canonical": str(uri),
        "scheme": uri.scheme,
        "group": uri.group,
        "group_labels": list(uri.group_labels),
        "instantiation": _instantiation_json(uri.instantiation),
        "port": uri.port,
        "sec_credentials": uri.sec_credentials,
    }


# -- commands ------------------------------------------------------------------

def cmd_parse(args: argparse.Namespace) -> int:
    _emit(dumps(uri_json(parse(args.uri))))
    return 0


def cmd_map(args: argparse.Namespace) -> int:
    b = default_map(parse(args.uri))
    _emit(dumps({"technology": b.technology, "address": b.address, "port": b.port}))
    return 0


def cmd_covers(args: argparse.Namespace) -> int:
    m = match(parse(args.sub), parse(args.pub))
    _emit(dumps({"covers": m.covers, "reason": m.reason}))
    return 0


def cmd_keygen(args: argparse.Namespace) -> int:
    ident = identity.create_group_identity(args.seed, args.counter)
    identity.write_key(args.out, ident.sec_key)
    pub_path = args.out + ".pub"
    identity.write_key(pub_path, ident.pub_key)
    _emit(dumps({
        "counter": ident.counter,
        "credential": ident.credential,
        "group_id": ident.group_id.hex(),
        "pub_key": ident.pub_key.hex(),
        "public_key_file": pub_path,
        "secret_key_file": args.out,
    }))
    return 0


def _controller(key_file: str, counter: int) -> identity.GroupIdentity:
    sec = identity.read_key(key_file)
    return identity.GroupIdentity(identity.public_from_secret(sec), sec, counter)


def cmd_cert(args: argparse.Namespace) -> int:
    controller = _controller(args.controller_key, args.counter)
    source_pub = identity.read_key(args.source_pub)
    cert = identity.issue_certificate(controller, source_pub, args.lifetime)
    Path(args.out).write_bytes(cert.encode())
    _emit(dumps({
        "group_id": cert.group_id.hex(),
        "lifetime": list(cert.lifetime) if cert.lifetime else None,
        "out": args.out,
        "source_id": cert.source_id.hex(),
    }))
    return 0


def cmd_sign(args: argparse.Namespace) -> int:
    sec = identity.read_key(args.key)
    pub = identity.public_from_secret(sec)
    if args.cert:
        cert = identity.decode_certificate(Path(args.cert).read_bytes())
        signer: Any = identity.SourceKeys(pub, sec)
    else:
        cert = None
        signer = identity.GroupIdentity(pub, sec, args.counter)
    pkt = identity.sign_packet(signer, cert, args.uri, args.seq, args.payload.encode("utf-8"))
    Path(args.out).write_bytes(pkt.encode())
    _emit(dumps({"bytes": len(pkt.encode()), "group_id": pkt.group_id.hex(), "group_uri": pkt.group_uri,
                 "out": args.out, "seq": pkt.seq}))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    pkt = identity.decode_packet(Path(args.packet).read_bytes())
    verdict = identity.verify_packet(pkt, args.now)
    _emit(dumps({"group_uri": pkt.group_uri, "seq": pkt.seq, "verdict": verdict.value}))
    return 0 if verdict is identity.Verdict.ACCEPTED else 1


def _sim_config(args: argparse.Namespace, scenario: Scenario) -> StrategyConfig:
    base = scenario.strategy or StrategyConfig("rpf")
    if args.strategy:
        base = replace(base, strategy=args.strategy)
    return base.with_overrides(rp=args.rp, edge_caches=args.caches, reflector=args.reflector)


def _run_one(topology: Topology, scenario: Scenario, config: StrategyConfig, args: argparse.Namespace) -> RunMetrics:
    sim = Simulation(topology, config, seed=args.seed, sign=args.sign, verify_every_hop=args.every_hop)
    sim.add_events(scenario.events)
    sim.run_until()
    return sim.metrics


def _csv(rows: list[Sequence[Any]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _fmt(value: Any) -> Any:
    return f"{value:.6f}" if isinstance(value, float) else value


def cmd_sim(args: argparse.Namespace) -> int:
    topology = Topology.load(args.topology)
    scenario = Scenario.load(args.scenario)
    config = _sim_config(args, scenario)
    if args.compare:
        names = [n.strip() for n in args.compare.split(",") if n.strip()]
        runs = {name: _run_one(topology, scenario, replace(config, strategy=name), args) for name in names}
        if args.format == "csv":
            rows = [("strategy",) + COMPARE_COLUMNS]
            for name, m in runs.items():
                data = m.to_json()
                rows.append((name,) + tuple(_fmt(data[c]) for c in COMPARE_COLUMNS))
            text = _csv(rows)
        else:
            text = dumps({"compare": names, "runs": {n: m.to_json() for n, m in runs.items()}, "seed": args.seed})
    else:
        metrics = _run_one(topology, scenario, config, args)
        if args.format == "csv":
            text = _csv([("u", "v", "transmissions")] + metrics.link_table())
        else:
            text = dumps({"metrics": metrics.to_json(), "seed": args.seed, "strategy": config.to_json()})
    _emit(text, args.out)
    return 0


# -- argument parsing ----------------------------------------------------------

def _hex(text: str) -> bytes:
    try:
        return bytes.fromhex(text)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be hex") from None


def _lifetime(text: str) -> tuple[int, int]:
    try:
        nb, na = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("lifetime is NOT_BEFORE:NOT_AFTER") from None
    return nb, na


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError("expected comma separated node ids") from None


def _strategy_list(text: str) -> str:
    for name in text.split(","):
        try:
            StrategyConfig(name.strip())
        except NamecastError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="namecast", description="Name-oriented multicast tooling and simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse and canonicalize a group URI")
    p.add_argument("uri")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("map", help="stateless default mapping to a technology address")
    p.add_argument("uri")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("covers", help="does SUB cover PUB")
    p.add_argument("sub")
    p.add_argument("pub")
    p.set_defaults(func=cmd_covers)

    p = sub.add_parser("keygen", help="derive a group controller key from a seed")
    p.add_argument("--seed", type=_hex, required=True, help="hex, at least 32 bytes")
    p.add_argument("--counter", type=int, default=0)
    p.add_argument("--out", required=True, help="secret key file; the public key goes to OUT.pub")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("cert", help="admit a source to a group")
    p.add_argument("--controller-key", required=True)
    p.add_argument("--counter", type=int, default=0)
    p.add_argument("--source-pub", required=True)
    p.add_argument("--lifetime", type=_lifetime, help="NOT_BEFORE:NOT_AFTER in seconds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cert)

    p = sub.add_parser("sign", help="sign a payload into a packet file")
    p.add_argument("--key", required=True)
    p.add_argument("--counter", type=int, default=0)
    p.add_argument("--cert")
    p.add_argument("--uri", required=True)
    p.add_argument("--payload", default="")
    p.add_argument("--seq", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("verify", help="verify a packet file")
    p.add_argument("packet")
    p.add_argument("--now", type=float, default=0.0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sim", help="run a scenario")
    p.add_argument("topology")
    p.add_argument("scenario")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--rp", type=int)
    p.add_argument("--caches", type=_int_list)
    p.add_argument("--reflector", type=int)
    p.add_argument("--compare", type=_strategy_list, help="comma separated strategies")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sign", action="store_true", help="sign every publish with seed-derived keys")
    p.add_argument("--every-hop", action="store_true", help="verify signatures at every hop")
    p.set_defaults(func=cmd_sim)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NamecastError, OSError, ValueError) as exc:
        sys.stdout.write(dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
