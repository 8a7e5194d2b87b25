#!/usr/bin/env python3
"""Access-link stress of a reflector versus RPF as the audience grows.

The reflector sits on a leaf of a star; every other leaf but one subscribes
and the last leaf publishes. Reflector stress grows with the audience while
RPF stays at one copy per link.
"""

import argparse

from namecast.routing import reflector_deliver, rpf_deliver
from namecast.simnet import Topology


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-subscribers", type=int, default=32)
    args = ap.parse_args(argv)
    print("subscribers,reflector_stress,rpf_stress,reflector_tx,rpf_tx")
    k = 1
    while k <= args.max_subscribers:
        topo = Topology.star(k + 2)
        subs = range(3, k + 3)
        refl = reflector_deliver(topo, 1, subs, 2)
        rpf = rpf_deliver(topo, subs, 2, "opaque://g@n2")
        print(f"{k},{refl.max_link_stress},{rpf.max_link_stress},{refl.link_transmissions},{rpf.link_transmissions}")
        k *= 2


if __name__ == "__main__":
    main()
