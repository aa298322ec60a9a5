#!/usr/bin/env python3
"""Viscous Burgers: two NLDEIM sensors versus two DEIM sensors, scored by
3-NN reconstruction on simulations at unseen initial widths."""
import argparse

import numpy as np

from nldeim.experiments import burgers_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-x", type=int, default=256)
    ap.add_argument("--n-chi", type=int, default=25)
    ap.add_argument("--n-patches", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--windows", action="store_true", help="also break errors down by time")
    args = ap.parse_args()

    b = burgers_comparison(n_x=args.n_x, n_chi=args.n_chi, n_patches=args.n_patches, seed=args.seed)
    print(f"patches K={b.extra['K']} (dropped cells {b.extra['dropped_cells']}), "
          f"POD modes for 99%: {b.pod_modes_99}")
    print(f"NLDEIM xi = {np.round(sorted(b.nldeim_xi), 4).tolist()}")
    print(f"DEIM   xi = {np.round(sorted(b.deim_xi), 4).tolist()}")
    for name, e in (("NLDEIM", b.nldeim_errors), ("DEIM", b.deim_errors)):
        print(f"{name:6s} rel. error median {np.median(e):.4f} mean {e.mean():.4f} max {e.max():.4f}")
    print(f"median ratio DEIM/NLDEIM = {b.median_ratio:.3f}")
    if args.windows:
        t = np.tile(b.extra["test_times"], len(b.extra["test_chis"]))
        edges = [0.0, 0.1, 0.3, 0.6, 1.01]
        for lo, hi in zip(edges[:-1], edges[1:]):
            m = (t >= lo) & (t < hi)
            print(f"  t in [{lo:.1f},{min(hi, 1):.1f}): NLDEIM {np.median(b.nldeim_errors[m]):.4f} "
                  f"DEIM {np.median(b.deim_errors[m]):.4f}")


if __name__ == "__main__":
    main()
