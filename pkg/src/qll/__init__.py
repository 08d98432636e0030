"""Finite-volume numerics for quasi-locality of quantum lattice dynamics.

Lieb-Robinson commutator bounds, F-function certificates, local approximation
norms, and quasi-adiabatic ground-state transport, all checked by exact
diagonalization on small spin systems.
"""

__version__ = "0.1.0"
