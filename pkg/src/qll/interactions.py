"""Interactions as maps from finite site sets to Hermitian terms.

Terms are stored on their exact key sets.  Optional time profiles scale a
term by a piecewise-linear coefficient, which keeps the time integral of the
F-norm exactly computable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.integrate import trapezoid

from . import algebra
from .algebra import LocalOperator, commutator, embed, op_norm, pauli_string
from .errors import AlgebraError, ConfigError
from .ffunc import FFunction, distance_table
from .lattice import MetricGraph, ball


@dataclass(frozen=True)
class Profile:
    """Piecewise-linear coefficient t -> c(t), held constant outside the knots."""

    knots: tuple
    values: tuple

    def __post_init__(self):
        k = tuple(float(v) for v in self.knots)
        v = tuple(float(x) for x in self.values)
        if len(k) != len(v) or not k:
            raise ConfigError("profile needs matching, non-empty knots and values")
        if any(b <= a for a, b in zip(k, k[1:])):
            raise ConfigError("profile knots must be strictly increasing")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    def __call__(self, t):
        return np.interp(t, self.knots, self.values)

    def breakpoints(self, a: float, b: float) -> list[float]:
        """Knots and sign changes strictly inside (a, b)."""
        pts = [k for k in self.knots if a < k < b]
        for (k0, v0), (k1, v1) in zip(zip(self.knots, self.values), zip(self.knots[1:], self.values[1:])):
            if v0 * v1 < 0:
                z = k0 + (k1 - k0) * v0 / (v0 - v1)
                if a < z < b:
                    pts.append(z)
        return pts

    @classmethod
    def from_config(cls, cfg) -> "Profile":
        return cls(tuple(cfg["knots"]), tuple(cfg["values"]))


@dataclass(frozen=True, eq=False)
class Interaction:
    terms: Mapping[frozenset, LocalOperator]
    profiles: Mapping[frozenset, Profile] = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for X, op in self.terms.items():
            X = frozenset(int(x) for x in X)
            if not set(op.support) <= X:
                raise AlgebraError(f"term support {op.support} exceeds its key {sorted(X)}")
            op = embed(op, X, op.site_dims())
            scale = max(1.0, float(np.abs(op.matrix).max(initial=0.0)))
            if not op.is_hermitian(1e-12 * scale):
                raise AlgebraError(f"term on {sorted(X)} is not Hermitian")
            clean[X] = clean[X] + op if X in clean else op
        object.__setattr__(self, "terms", clean)
        object.__setattr__(self, "profiles", {frozenset(k): p for k, p in self.profiles.items()})
        object.__setattr__(self, "_norms", {X: op_norm(op) for X, op in clean.items()})

    @property
    def time_dependent(self) -> bool:
        return bool(self.profiles)

    def coefficient(self, X, t: float) -> float:
        p = self.profiles.get(X)
        return 1.0 if p is None else float(p(t))

    def term(self, X, t: float = 0.0) -> LocalOperator:
        return self.coefficient(X, t) * self.terms[X]

    def term_norm(self, X, t: float = 0.0) -> float:
        return abs(self.coefficient(X, t)) * self._norms[X]

    def at(self, t: float) -> "Interaction":
        """Frozen snapshot Phi(., t) without profiles."""
        if not self.profiles:
            return self
        return Interaction({X: self.term(X, t) for X in self.terms})

    def sites(self) -> set:
        return set().union(*self.terms) if self.terms else set()

    def breakpoints(self, a: float, b: float) -> list[float]:
        pts = set()
        for p in self.profiles.values():
            pts.update(p.breakpoints(a, b))
        return sorted(pts)

    def _combine(self, other: "Interaction", sign: float) -> "Interaction":
        if self.time_dependent or other.time_dependent:
            raise AlgebraError("arithmetic is defined for time-independent interactions only")
        out = dict(self.terms)
        for X, op in other.terms.items():
            out[X] = out[X] + sign * op if X in out else sign * op
        return Interaction(out)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, c: float):
        return Interaction({X: c * op for X, op in self.terms.items()}, self.profiles)

    __rmul__ = __mul__


def zero_interaction() -> Interaction:
    return Interaction({})


def _zz(x, y, c):
    return pauli_string({x: "Z", y: "Z"}, c)


def preset(model: str, graph: MetricGraph, coupling_profile: Profile | None = None,
           field_profile: Profile | None = None, **params) -> Interaction:
    """Standard spin-1/2 models on ``graph``.

    ising(J), tfim(J, g), xxz(J, Delta, h), longrange_ising(J, alpha).
    Bond terms live on nearest-neighbour edges except for the long-range model,
    which couples every pair with strength J d(x, y)^-alpha.
    """
    terms: dict = {}
    bonds, onsite = [], []
    if model in ("ising", "tfim"):
        J = float(params.get("J", 1.0))
        for x, y in graph.edges():
            terms[frozenset((x, y))] = _zz(x, y, -J)
            bonds.append(frozenset((x, y)))
        if model == "tfim":
            g = float(params.get("g", 1.0))
            for x in graph.sites:
                terms[frozenset((x,))] = pauli_string({x: "X"}, -g)
                onsite.append(frozenset((x,)))
    elif model == "xxz":
        J = float(params.get("J", 1.0))
        delta = float(params.get("Delta", params.get("delta", 1.0)))
        h = float(params.get("h", 0.0))
        for x, y in graph.edges():
            op = (pauli_string({x: "X", y: "X"}, J) + pauli_string({x: "Y", y: "Y"}, J)
                  + _zz(x, y, J * delta))
            terms[frozenset((x, y))] = op
            bonds.append(frozenset((x, y)))
        for x in graph.sites:
            terms[frozenset((x,))] = pauli_string({x: "Z"}, -h)
            onsite.append(frozenset((x,)))
    elif model == "longrange_ising":
        J = float(params.get("J", 1.0))
        alpha = float(params.get("alpha", 3.0))
        if J <= 0:
            raise ConfigError("longrange_ising needs J > 0")
        if alpha <= graph.dimension:
            raise ConfigError(f"longrange_ising needs alpha > {graph.dimension}")
        for x in graph.sites:
            for y in graph.sites:
                if x < y:
                    terms[frozenset((x, y))] = _zz(x, y, -J * graph.d(x, y) ** -alpha)
                    bonds.append(frozenset((x, y)))
    else:
        raise ConfigError(f"unknown model {model!r}")
    profiles = {}
    if coupling_profile is not None:
        profiles.update({X: coupling_profile for X in bonds})
    if field_profile is not None:
        profiles.update({X: field_profile for X in onsite})
    return Interaction(terms, profiles)


def from_config(cfg: Mapping, graph: MetricGraph) -> Interaction:
    """``{"model": "tfim", "J": 1, "g": 2, "profile": {...}}`` or ``{"terms": [...]}``."""
    if "terms" in cfg:
        terms = {}
        for entry in cfg["terms"]:
            op = algebra.from_pauli_terms(entry["op"])
            X = frozenset(entry.get("support", op.support))
            if any(not (0 <= x < graph.n) for x in X):
                raise ConfigError(f"term support {sorted(X)} outside the lattice")
            terms[X] = terms[X] + op if X in terms else op
        return Interaction(terms)
    if "model" not in cfg:
        raise ConfigError("interaction needs a model or an explicit term list")
    prof = cfg.get("profile", {})
    params = {k: v for k, v in cfg.items() if k not in ("model", "profile")}
    return preset(
        cfg["model"], graph,
        coupling_profile=Profile.from_config(prof["coupling"]) if "coupling" in prof else None,
        field_profile=Profile.from_config(prof["field"]) if "field" in prof else None,
        **params,
    )


def local_hamiltonian(phi: Interaction, region: Iterable[int], t: float = 0.0) -> LocalOperator:
    """Sum of all terms with X inside ``region``, as an operator on ``region``."""
    region = sorted(set(int(x) for x in region))
    algebra.check_capacity([2] * len(region))
    dim = 2 ** len(region)
    H = np.zeros((dim, dim), dtype=complex)
    rset = set(region)
    for X in phi.terms:
        if X <= rset:
            c = phi.coefficient(X, t)
            if c != 0:
                H += c * embed(phi.terms[X], region).matrix
    return LocalOperator(tuple(region), H, (2,) * len(region))


def pair_sums(phi: Interaction, n: int, t: float = 0.0, derivative: Interaction | None = None) -> np.ndarray:
    """``M[x, y] = sum_{X contains x, y} ||Phi(X, t)||`` (+ |X| ||Phi'(X)||)."""
    M = np.zeros((n, n))
    for X in phi.terms:
        idx = sorted(X)
        M[np.ix_(idx, idx)] += phi.term_norm(X, t)
    if derivative is not None:
        for X in derivative.terms:
            idx = sorted(X)
            M[np.ix_(idx, idx)] += len(X) * derivative.term_norm(X, t)
    return M


def interaction_norm(phi: Interaction, F: FFunction, g: MetricGraph, t: float = 0.0) -> float:
    """sup over site pairs (x = y included) of F(d(x,y))^-1 sum_{X contains x,y} ||Phi(X,t)||."""
    if not phi.terms:
        return 0.0
    return float((pair_sums(phi, g.n, t) / distance_table(F, g)).max())


def interaction_norm_integral(phi: Interaction, F: FFunction, g: MetricGraph, s: float, t: float) -> float:
    """Exact integral of ||Phi(r)||_F over r between s and t.

    Between breakpoints every pair sum is linear in r, so the supremum is a
    convex piecewise-linear envelope; it is integrated exactly by evaluating
    it at all pairwise line intersections.
    """
    a, b = (s, t) if s <= t else (t, s)
    if a == b or not phi.terms:
        return 0.0
    if not phi.time_dependent:
        return (b - a) * interaction_norm(phi, F, g)
    W = distance_table(F, g)
    pts = [a] + phi.breakpoints(a, b) + [b]
    total = 0.0
    for lo, hi in zip(pts, pts[1:]):
        v0 = np.unique(np.stack([(pair_sums(phi, g.n, lo) / W).ravel(),
                                 (pair_sums(phi, g.n, hi) / W).ravel()], axis=1), axis=0)
        slopes = (v0[:, 1] - v0[:, 0]) / (hi - lo)
        cand = [lo, hi]
        ds = slopes[:, None] - slopes[None, :]
        dv = v0[None, :, 0] - v0[:, None, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = lo + dv / ds
        tau = tau[np.isfinite(tau) & (tau > lo) & (tau < hi)]
        cand.extend(tau.tolist())
        cand = np.unique(cand)
        env = (v0[:, 0][None, :] + slopes[None, :] * (cand[:, None] - lo)).max(axis=1)
        total += float(trapezoid(env, cand))
    return total


def derivation(phi: Interaction, A: LocalOperator, region: Iterable[int], t: float = 0.0) -> LocalOperator:
    """sum of [Phi(X, t), A] over terms X inside ``region`` that meet supp(A)."""
    region = sorted(set(int(x) for x in region))
    if not set(A.support) <= set(region):
        raise AlgebraError("operator must be supported inside the region")
    out = embed(0 * A, region)
    rset, aset = set(region), set(A.support)
    for X in phi.terms:
        if X <= rset and X & aset:
            out = out + embed(commutator(phi.term(X, t), A), region)
    return out


def ball_regroup(phi: Interaction, g: MetricGraph) -> dict:
    """Regroup terms onto enclosing balls and report f(n) = max_x ||Phi(b_x(n))||.

    Each term is assigned to the smallest ball that contains it (lowest-index
    centre on ties); terms landing on the same ball are summed first.
    """
    groups: dict = {}
    for X, op in phi.terms.items():
        idx = sorted(X)
        radii = g.dist[:, idx].max(axis=1)
        r = int(radii.min())
        x = int(np.argmin(radii))
        key = (x, r)
        groups[key] = groups[key] + op if key in groups else op
    profile: dict = {}
    for (x, r), op in groups.items():
        if not set(op.support) <= ball(g, x, r):
            raise AlgebraError("regrouped term escapes its ball")
        profile[r] = max(profile.get(r, 0.0), op_norm(op))
    return dict(sorted(profile.items()))


@dataclass(frozen=True)
class InteractionPath:
    """s -> Phi(s) on [0, 1] with term-wise derivative s -> Phi'(s)."""

    phi: Callable[[float], Interaction]
    dphi: Callable[[float], Interaction]

    def reversed(self) -> "InteractionPath":
        return InteractionPath(lambda s: self.phi(1.0 - s), lambda s: -1.0 * self.dphi(1.0 - s))


def _zero_like(op: LocalOperator) -> LocalOperator:
    return LocalOperator(op.support, np.zeros_like(op.matrix), op.dims)


def linear_path(phi0: Interaction, phi1: Interaction) -> InteractionPath:
    """(1 - s) Phi0 + s Phi1 term-wise, with derivative Phi1 - Phi0."""
    if phi0.time_dependent or phi1.time_dependent:
        raise AlgebraError("paths are built from time-independent endpoints")
    keys = list(phi0.terms) + [X for X in phi1.terms if X not in phi0.terms]
    t0 = {X: phi0.terms[X] if X in phi0.terms else _zero_like(phi1.terms[X]) for X in keys}
    t1 = {X: phi1.terms[X] if X in phi1.terms else _zero_like(phi0.terms[X]) for X in keys}
    diff = Interaction({X: t1[X] - t0[X] for X in keys})

    def phi(s):
        return Interaction({X: (1.0 - s) * t0[X] + s * t1[X] for X in keys})

    return InteractionPath(phi=phi, dphi=lambda s: diff)


def b1_path_norm(path: InteractionPath, F: FFunction, g: MetricGraph, s_grid: Iterable[float]) -> float:
    """max over the grid of sup_{x,y} F(d)^-1 sum_{X contains x,y} (||Phi(X,s)|| + |X| ||Phi'(X,s)||)."""
    s_grid = list(s_grid)
    if not s_grid:
        raise ConfigError("s grid must be non-empty")
    W = distance_table(F, g)
    return max(float((pair_sums(path.phi(s), g.n, derivative=path.dphi(s)) / W).max()) for s in s_grid)
