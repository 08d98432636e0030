"""Convergence of the quasi-adiabatic flow in step count and quadrature nodes.

    python scripts/flow_convergence.py --n 6 --g0 2 --g1 3
"""
import argparse

import numpy as np

from qll import gsphase, interactions, lattice


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=6)
    ap.add_argument("--g0", type=float, default=2.0)
    ap.add_argument("--g1", type=float, default=3.0)
    ap.add_argument("--steps", type=int, nargs="+", default=[5, 10, 25, 50, 100])
    ap.add_argument("--nodes", type=int, nargs="+", default=[16, 64, 128])
    args = ap.parse_args()

    g = lattice.build_chain(args.n)
    path = interactions.linear_path(interactions.preset("tfim", g, J=1, g=args.g0),
                                    interactions.preset("tfim", g, J=1, g=args.g1))
    region = range(args.n)
    w = gsphase.WeightFunction(gsphase.auto_xi(path, region, np.linspace(0, 1, max(args.steps) + 1)))
    print(f"xi = {w.xi:.4f}")
    print("steps nodes  1 - min fidelity   unitarity error")
    for m in args.steps:
        for q in args.nodes:
            res = gsphase.spectral_flow(path, w, region, np.linspace(0, 1, m + 1), nodes=q)
            print(f"{m:<5d} {q:<6d} {1 - res.fidelities.min():.3e}          {res.max_unitarity_error():.2e}")


if __name__ == "__main__":
    main()
