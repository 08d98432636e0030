"""Finite metric graphs: chains, rings, grids and explicit graphs.

All distances are precomputed into an integer matrix, so every query is a
table lookup.  Graphs are immutable once built.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import shortest_path

from .errors import DomainError, InvalidSizeError

MAX_SITES = 512


@dataclass(frozen=True, eq=False)
class MetricGraph:
    """Sites ``0..n-1`` with a symmetric integer distance matrix."""

    dist: np.ndarray
    kind: str = "explicit"
    dims: tuple = ()
    periodic: bool = False

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=np.int64)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise InvalidSizeError("distance matrix must be square with at least one site")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def sites(self) -> tuple:
        return tuple(range(self.n))

    @property
    def diameter(self) -> int:
        return int(self.dist.max())

    @property
    def dimension(self) -> int:
        """Growth exponent of the underlying lattice (1 for explicit graphs)."""
        return len(self.dims) if self.dims else 1

    def d(self, x: int, y: int) -> int:
        self._check_site(x)
        self._check_site(y)
        return int(self.dist[x, y])

    def set_distance(self, xs: Iterable[int], ys: Iterable[int]) -> int:
        """Distance between two non-empty site sets (minimum over pairs)."""
        xs, ys = list(xs), list(ys)
        if not xs or not ys:
            raise DomainError("set distance needs non-empty sets")
        return int(self.dist[np.ix_(xs, ys)].min())

    def edges(self) -> list[tuple[int, int]]:
        """Nearest-neighbour pairs ``x < y`` with ``d(x, y) == 1``."""
        xs, ys = np.nonzero(np.triu(self.dist == 1))
        return [(int(x), int(y)) for x, y in zip(xs, ys)]

    def coords(self, x: int) -> tuple:
        if not self.dims:
            return (x,)
        return tuple(int(c) for c in np.unravel_index(x, self.dims))

    def _check_site(self, x):
        if not (isinstance(x, (int, np.integer)) and 0 <= x < self.n):
            raise DomainError(f"unknown site {x!r}")

    def check_metric(self) -> bool:
        """Exhaustive check of the metric axioms (zero diagonal, symmetry, triangle)."""
        d = self.dist
        if np.any(np.diag(d) != 0) or np.any(d != d.T):
            return False
        off = d[~np.eye(self.n, dtype=bool)]
        if np.any(off <= 0):
            return False
        # d[x, z] <= d[x, y] + d[y, z] for all triples
        return bool(np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :]))


@dataclass(frozen=True)
class GrowthCertificate:
    c: float
    nu: float

    def __post_init__(self):
        if not (self.c > 0 and self.nu > 0):
            raise DomainError("growth certificate needs c > 0 and nu > 0")

    def bound(self, r):
        return 1.0 + self.c * np.asarray(r, dtype=float) ** self.nu


@dataclass(frozen=True)
class GrowthCheck:
    """Outcome of :func:`check_growth`.

    On failure ``(x, r)`` is the first violating cell (smallest radius, then
    largest ball at that radius).  On success it is the tightest cell.
    """

    ok: bool
    x: int | None
    r: int | None
    ball_size: int | None
    bound: float | None


def build_chain(n: int) -> MetricGraph:
    if n < 1:
        raise InvalidSizeError(f"chain needs n >= 1, got {n}")
    return build_grid([n], periodic=False)


def build_ring(n: int) -> MetricGraph:
    if n < 1:
        raise InvalidSizeError(f"ring needs n >= 1, got {n}")
    return build_grid([n], periodic=True)


def build_grid(dims: Sequence[int], periodic: bool = False, max_sites: int = MAX_SITES) -> MetricGraph:
    dims = tuple(int(k) for k in dims)
    if not dims or any(k < 1 for k in dims):
        raise InvalidSizeError(f"grid dims must be positive, got {dims}")
    n = int(np.prod(dims))
    if n > max_sites:
        raise InvalidSizeError(f"grid has {n} sites, more than the cap {max_sites}")
    coords = np.array(np.unravel_index(np.arange(n), dims)).T
    delta = np.abs(coords[:, None, :] - coords[None, :, :])
    if periodic:
        delta = np.minimum(delta, np.array(dims) - delta)
    dist = delta.sum(axis=-1)
    if len(dims) == 1:
        kind = "ring" if periodic else "chain"
    else:
        kind = "grid"
    return MetricGraph(dist=dist, kind=kind, dims=dims, periodic=periodic)


def from_edges(n: int, edges: Iterable[tuple[int, int]]) -> MetricGraph:
    """Graph distance on an explicit connected graph."""
    if n < 1:
        raise InvalidSizeError("graph needs at least one site")
    adj = np.zeros((n, n))
    for x, y in edges:
        if not (0 <= x < n and 0 <= y < n):
            raise DomainError(f"edge ({x}, {y}) outside 0..{n - 1}")
        adj[x, y] = adj[y, x] = 1
    d = shortest_path(adj, unweighted=True, directed=False)
    if np.isinf(d).any():
        raise DomainError("explicit graph must be connected")
    return MetricGraph(dist=d.astype(np.int64), kind="explicit")


def ball(g: MetricGraph, x: int, r: int) -> frozenset:
    g._check_site(x)
    if r < 0:
        raise DomainError("ball radius must be non-negative")
    return frozenset(int(y) for y in np.flatnonzero(g.dist[x] <= r))


def ball_sizes(g: MetricGraph) -> np.ndarray:
    """``sizes[x, r] = |B_x(r)|`` for r in 0..diameter."""
    radii = np.arange(g.diameter + 1)
    return (g.dist[:, :, None] <= radii[None, None, :]).sum(axis=1)


def check_growth(g: MetricGraph, cert: GrowthCertificate) -> GrowthCheck:
    """Exhaustively test ``|B_x(r)| <= 1 + c r^nu`` for r in [1, diameter]."""
    if g.diameter < 1:
        return GrowthCheck(True, None, None, None, None)
    sizes = ball_sizes(g)[:, 1:]
    radii = np.arange(1, g.diameter + 1)
    bounds = cert.bound(radii)
    bad = sizes > bounds[None, :]
    if bad.any():
        r_idx = int(np.flatnonzero(bad.any(axis=0))[0])
        x = int(np.argmax(np.where(bad[:, r_idx], sizes[:, r_idx], -1)))
        return GrowthCheck(False, x, int(radii[r_idx]), int(sizes[x, r_idx]), float(bounds[r_idx]))
    ratio = sizes / bounds[None, :]
    x, r_idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return GrowthCheck(True, int(x), int(radii[r_idx]), int(sizes[x, r_idx]), float(bounds[r_idx]))


def from_config(cfg: dict, max_sites: int = MAX_SITES) -> MetricGraph:
    """Build a graph from ``{"kind": ..., "dims": [...], "periodic": bool}``."""
    kind = cfg.get("kind", "chain")
    dims = cfg.get("dims")
    if dims is None and "n" in cfg:
        dims = [cfg["n"]]
    if not dims:
        raise InvalidSizeError("lattice descriptor needs dims")
    if kind == "chain":
        if len(dims) != 1:
            raise InvalidSizeError("chain takes a single dimension")
        return build_grid(dims, periodic=False, max_sites=max_sites)
    if kind == "ring":
        if len(dims) != 1:
            raise InvalidSizeError("ring takes a single dimension")
        return build_grid(dims, periodic=True, max_sites=max_sites)
    if kind == "grid":
        return build_grid(dims, periodic=bool(cfg.get("periodic", False)), max_sites=max_sites)
    raise DomainError(f"unknown lattice kind {kind!r}")
