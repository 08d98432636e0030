"""Finite-size gap along a linear interpolation g0 -> g1 of transverse-field Ising chains.

    python scripts/gap_scan.py --g0 0.2 --g1 2 --sizes 4 6 8 10
"""
import argparse

import numpy as np

from qll import gsphase, interactions, lattice


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--g0", type=float, default=2.0)
    ap.add_argument("--g1", type=float, default=4.0)
    ap.add_argument("--J", type=float, default=1.0)
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 6, 8])
    ap.add_argument("--points", type=int, default=41)
    ap.add_argument("--deg-tol", type=float, default=1e-8,
                    help="levels closer than this count as one ground-state cluster")
    args = ap.parse_args()

    g = lattice.build_chain(max(args.sizes))
    path = interactions.linear_path(interactions.preset("tfim", g, J=args.J, g=args.g0),
                                    interactions.preset("tfim", g, J=args.J, g=args.g1))
    s = np.linspace(0, 1, args.points)
    scan = gsphase.gap_scan(path, [range(n) for n in args.sizes], s, deg_tol=args.deg_tol)
    for n in args.sizes:
        s_min, gap = scan.min_gap[n]
        g_min = args.g0 + s_min * (args.g1 - args.g0)
        print(f"n={n:<3d} min gap {gap:.6f} at s={s_min:.3f} (g={g_min:.3f})")


if __name__ == "__main__":
    main()
