"""Difference of two Heisenberg dynamics against its bound as the interactions approach each other.

    python scripts/continuity_scaling.py --n 6 --dg 0.1
"""
import argparse

import numpy as np

from qll import dynamics, ffunc, interactions, lattice
from qll.algebra import pauli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--g", type=float, default=1.0)
    ap.add_argument("--dg", type=float, default=0.1)
    ap.add_argument("--t", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0])
    args = ap.parse_args()

    g = lattice.build_chain(args.n)
    F = ffunc.PowerLaw(1, 1)
    phi = interactions.preset("tfim", g, J=1, g=args.g)
    A = pauli("Z", 0)
    print("scale   t      ||difference||   bound")
    for lam in (1.0, 0.1, 0.01):
        psi = interactions.preset("tfim", g, J=1, g=args.g + lam * args.dg)
        for t in args.t:
            lhs, rhs = dynamics.dynamics_difference(phi, psi, F, g, g.sites, A, t)
            print(f"{lam:<7g} {t:<6g} {lhs:.6e}     {rhs:.6e}")


if __name__ == "__main__":
    main()
