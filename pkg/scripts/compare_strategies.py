#!/usr/bin/env python3
"""Run every distribution strategy on random SSM workloads and print a CSV
of link cost, stress, stretch and control overhead per (seed, strategy).

    python3 scripts/compare_strategies.py --nodes 20 --subscribers 5 --seeds 10

Channels name their source (``ch0@n7``). Hybrid and reflector honour a
resolvable instantiation, so on these channels both serve from the source
itself and report identical costs.
"""

import argparse
import csv
import random
import sys

from namecast.routing import STRATEGIES, StrategyConfig
from namecast.simnet import Simulation, Topology, join, publish

COLUMNS = ["seed", "strategy", "link_transmissions", "max_link_stress", "mean_path_stretch",
           "control_messages", "delivery_ratio", "duplicate_count"]


def workload(topo, rng, subscribers, sources, publishes):
    picked = rng.sample(topo.nodes, subscribers + sources)
    subs, srcs = picked[:subscribers], picked[subscribers:]
    events = [join(0, s, f"opaque://ch{i}@n{src}") for s in subs for i, src in enumerate(srcs)]
    for k in range(publishes):
        i = rng.randrange(len(srcs))
        events.append(publish(1 + k * 0.5, srcs[i], f"opaque://ch{i}@n{srcs[i]}"))
    return events


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=20)
    ap.add_argument("--extra-links", type=int, default=15)
    ap.add_argument("--subscribers", type=int, default=5)
    ap.add_argument("--sources", type=int, default=3)
    ap.add_argument("--publishes", type=int, default=100)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args(argv)

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(COLUMNS)
    for seed in range(args.seeds):
        rng = random.Random(seed)
        topo = Topology.random_connected(args.nodes, args.extra_links, rng, max_cost=3)
        events = workload(topo, rng, args.subscribers, args.sources, args.publishes)
        # the lowest-id nodes double as RP, caches and fallback reflector
        cfg = StrategyConfig("rpf", rp=0, edge_caches=(1, 2), reflector=3)
        for name in STRATEGIES:
            sim = Simulation(topo, StrategyConfig(name, cfg.rp, cfg.edge_caches, cfg.reflector))
            sim.add_events(events)
            sim.run_until()
            m = sim.metrics
            ratio = m.delivery_count / m.expected_deliveries if m.expected_deliveries else 1.0
            out.writerow([seed, name, m.link_transmissions, m.max_link_stress, f"{m.mean_path_stretch:.4f}",
                          m.control_messages, f"{ratio:.4f}", m.duplicate_count])


if __name__ == "__main__":
    main()
