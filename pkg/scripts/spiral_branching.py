#!/usr/bin/env python3
"""Turn the spiral immersion (x1, x2) into an embedding by adding branch
coordinates chosen from the rho-neighbourhoods that split into clusters."""
import argparse

from nldeim import datasets
from nldeim.experiments import spiral_embedding


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--rho", type=float, default=0.1)
    ap.add_argument("--mode", choices=["bases", "vectors"], default="bases")
    args = ap.parse_args()

    s = datasets.gen_spiral(args.m, args.seed)
    out = spiral_embedding(s.points, args.rho, mode=args.mode)
    print(f"neighbourhoods with >1 cluster: {out['multi']}, branch items: {out['items']}")
    print(f"P_B = {[j + 1 for j in out['p_b']]}")
    print(f"P_E = {[j + 1 for j in out['p_e']]}")


if __name__ == "__main__":
    main()
