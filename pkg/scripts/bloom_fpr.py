#!/usr/bin/env python3
"""Measured vs analytic false-positive rate of instantiation-set filters
over a sweep of filter sizes and hash counts (n = m/10 by default)."""

import argparse
import csv
import math
import sys

from namecast.bloom import BloomFilter


def measure(m, k, n, trials):
    bf = BloomFilter.from_elements((f"member-{i}" for i in range(n)), m, k)
    hits = sum(f"probe-{i}" in bf for i in range(trials))
    return hits / trials, (1 - math.exp(-k * n / m)) ** k


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="256,1024,4096")
    ap.add_argument("--hashes", default="1,3,5,7,10")
    ap.add_argument("--load", type=float, default=0.1, help="n / m")
    ap.add_argument("--trials", type=int, default=100_000)
    args = ap.parse_args(argv)

    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["m", "k", "n", "measured", "analytic", "ratio"])
    for m in map(int, args.sizes.split(",")):
        n = max(1, int(m * args.load))
        for k in map(int, args.hashes.split(",")):
            measured, analytic = measure(m, k, n, args.trials)
            ratio = measured / analytic if analytic else float("nan")
            out.writerow([m, k, n, f"{measured:.6f}", f"{analytic:.6f}", f"{ratio:.3f}"])


if __name__ == "__main__":
    main()
