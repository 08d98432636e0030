"""Finite-volume Heisenberg dynamics and Lieb-Robinson bound checks.

Autonomous evolution diagonalizes H once per (interaction, region) and reuses
the spectral data for every time and observable.  Driven evolution composes
midpoint-exponential steps and halves the step until the result settles.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import algebra
from .algebra import LocalOperator, embed, matrix_norm, op_norm
from .errors import FormError, InsufficientDataError, IntegrationError, PreconditionError
from .ffunc import FFunction, Weighted, certify, norm_1
from .interactions import Interaction, interaction_norm, interaction_norm_integral, local_hamiltonian
from .lattice import MetricGraph

VIOLATION_RTOL = 1e-9
# absolute floor scaled by ||A|| ||B||, so exact zeros of the bound (t = 0) compare sanely
VIOLATION_ATOL = 1e-12
DRIVEN_TOL = 1e-8
MAX_HALVINGS = 20
_CHUNK_ELEMENTS = 1 << 22


def _region(region: Iterable[int]) -> tuple:
    region = tuple(sorted(set(int(x) for x in region)))
    algebra.check_capacity([2] * len(region))
    return region


@dataclass(frozen=True, eq=False)
class Propagator:
    """Spectral data of a time-independent H on ``volume``."""

    volume: tuple
    energies: np.ndarray
    vectors: np.ndarray

    @classmethod
    def from_interaction(cls, phi: Interaction, region: Iterable[int]) -> "Propagator":
        region = _region(region)
        H = local_hamiltonian(phi, region).matrix
        E, V = np.linalg.eigh(H)
        return cls(region, E, V)

    def unitary(self, t: float) -> np.ndarray:
        """exp(-i t H)."""
        return (self.vectors * np.exp(-1j * t * self.energies)) @ self.vectors.conj().T

    def to_eigenbasis(self, A: LocalOperator) -> np.ndarray:
        M = embed(A, self.volume).matrix
        return self.vectors.conj().T @ M @ self.vectors

    def heisenberg_matrix(self, A_eig: np.ndarray, t: float) -> np.ndarray:
        """U(t)* A U(t) given A in the eigenbasis."""
        ph = np.exp(1j * t * self.energies)
        rotated = (ph[:, None] * A_eig) * ph.conj()[None, :]
        return self.vectors @ rotated @ self.vectors.conj().T

    def heisenberg(self, A: LocalOperator, t: float) -> LocalOperator:
        M = self.heisenberg_matrix(self.to_eigenbasis(A), t)
        return LocalOperator(self.volume, M, (2,) * len(self.volume))


def evolve(phi: Interaction, region: Iterable[int], A: LocalOperator, t: float,
           propagator: Propagator | None = None) -> LocalOperator:
    """tau_t(A) = U(t)* A U(t) with U(t) = exp(-i t H_region)."""
    region = _region(region)
    if not set(A.support) <= set(region):
        raise PreconditionError("observable must be supported inside the region")
    if phi.time_dependent:
        return evolve_driven(phi, region, A, 0.0, t)
    if t == 0:
        return embed(A, region)
    prop = propagator or Propagator.from_interaction(phi, region)
    return prop.heisenberg(A, t)


# -- driven evolution ---------------------------------------------------------

def _hamiltonian_groups(phi: Interaction, region: tuple):
    """Split H(t) = H_static + sum_p p(t) H_p by shared time profile."""
    rset = set(region)
    dim = 2 ** len(region)
    static = np.zeros((dim, dim), dtype=complex)
    groups: dict = {}
    for X, op in phi.terms.items():
        if not X <= rset:
            continue
        M = embed(op, region).matrix
        p = phi.profiles.get(X)
        if p is None:
            static += M
        else:
            groups[p] = groups[p] + M if p in groups else M
    return static, list(groups.items())


def _midpoint_product(static, groups, t_from: float, t_to: float, n: int) -> np.ndarray:
    """U(t_to, t_from) as the ordered product of n midpoint exponentials."""
    dim = static.shape[0]
    h = (t_to - t_from) / n
    mids = t_from + h * (np.arange(n) + 0.5)
    U = np.eye(dim, dtype=complex)
    chunk = max(1, _CHUNK_ELEMENTS // (dim * dim))
    for start in range(0, n, chunk):
        m = mids[start:start + chunk]
        Hs = np.broadcast_to(static, (len(m), dim, dim)).copy()
        for p, Hp in groups:
            Hs += p(m)[:, None, None] * Hp[None]
        E, V = np.linalg.eigh(Hs)
        steps = (V * np.exp(-1j * h * E)[:, None, :]) @ V.conj().transpose(0, 2, 1)
        # later steps multiply from the left
        while len(steps) > 1:
            if len(steps) % 2:
                steps = np.concatenate([steps, np.eye(dim, dtype=complex)[None]])
            steps = steps[1::2] @ steps[0::2]
        U = steps[0] @ U
    return U


def _initial_steps(t_from, t_to, static, groups) -> int:
    scale = np.abs(static).sum(axis=1).max() + sum(
        max(abs(v) for v in p.values) * np.abs(Hp).sum(axis=1).max() for p, Hp in groups)
    return max(1, math.ceil(abs(t_to - t_from) * max(scale, 1.0) / 0.5))


def _refine(static, groups, t_from: float, t_to: float, tol: float):
    """Midpoint product on one smooth segment, halving h until ||dU|| < tol."""
    n = _initial_steps(t_from, t_to, static, groups)
    prev = _midpoint_product(static, groups, t_from, t_to, n)
    for _ in range(MAX_HALVINGS):
        n *= 2
        cur = _midpoint_product(static, groups, t_from, t_to, n)
        if matrix_norm(cur - prev) < tol:
            return cur, n
        prev = cur
    raise IntegrationError(f"step refinement did not reach {tol:g} after {MAX_HALVINGS} halvings")


def driven_propagator(phi: Interaction, region: Iterable[int], t_from: float, t_to: float,
                      tol: float = DRIVEN_TOL, observable: LocalOperator | None = None):
    """U(t_to, t_from) by midpoint stepping with step halving.

    The interval is cut at profile knots and sign changes so that H(t) is
    linear on every piece; otherwise a coarse grid can skip a kink entirely
    and halving would report false convergence.  Each piece is refined until
    the change in U is below its share of ``tol``; with an ``observable`` the
    target is scaled by 2 ||A|| so that tau(A) meets ``tol``.  Returns
    ``(U, n_steps)``.
    """
    region = _region(region)
    static, groups = _hamiltonian_groups(phi, region)
    dim = static.shape[0]
    if t_from == t_to:
        return np.eye(dim, dtype=complex), 0
    if not groups:
        E, V = np.linalg.eigh(static)
        return (V * np.exp(-1j * (t_to - t_from) * E)) @ V.conj().T, 1
    lo, hi = sorted((t_from, t_to))
    cuts = [lo] + phi.breakpoints(lo, hi) + [hi]
    if t_to < t_from:
        cuts = cuts[::-1]
    scale = 2.0 * op_norm(observable) if observable is not None else 1.0
    piece_tol = tol / (scale * (len(cuts) - 1)) if scale > 0 else tol
    U = np.eye(dim, dtype=complex)
    total = 0
    for a, b in zip(cuts, cuts[1:]):
        step, n = _refine(static, groups, a, b, piece_tol)
        U = step @ U
        total += n
    return U, total


def evolve_driven(phi: Interaction, region: Iterable[int], A: LocalOperator,
                  t_from: float, t_to: float, tol: float = DRIVEN_TOL) -> LocalOperator:
    """tau_{t,s}(A) = U(t,s)* A U(t,s) for the time-dependent H(t)."""
    region = _region(region)
    if not set(A.support) <= set(region):
        raise PreconditionError("observable must be supported inside the region")
    U, _ = driven_propagator(phi, region, t_from, t_to, tol, observable=A)
    M = embed(A, region).matrix
    return LocalOperator(region, U.conj().T @ M @ U, (2,) * len(region))


# -- commutator norms ---------------------------------------------------------

def _diagonal_signs(B: LocalOperator, region: tuple):
    """Index masks of the +1 / -1 eigenspaces when B is a diagonal involution."""
    d = np.diag(B.matrix)
    if not (np.array_equal(B.matrix, np.diag(d)) and np.all(np.isin(d, (1, -1)))):
        return None
    full = np.diag(embed(B, region).matrix).real
    return full > 0


def _commutator_norm(X: np.ndarray, B_full: np.ndarray | None, plus_mask, hermitian: bool = False) -> float:
    if plus_mask is not None:
        # [X, B] is block off-diagonal in the eigenbasis of B
        Y = X[np.ix_(plus_mask, ~plus_mask)]
        if Y.size == 0:
            return 0.0
        if hermitian:
            return 2.0 * float(np.linalg.norm(Y, 2))
        Z = X[np.ix_(~plus_mask, plus_mask)]
        return 2.0 * max(float(np.linalg.norm(Y, 2)), float(np.linalg.norm(Z, 2)))
    return matrix_norm(X @ B_full - B_full @ X)


def commutator_curve(phi: Interaction, region: Iterable[int], A: LocalOperator, B: LocalOperator,
                     times: Sequence[float], propagator: Propagator | None = None) -> list[float]:
    """||[tau_t(A), B]|| on the time grid."""
    region = _region(region)
    if set(A.support) & set(B.support):
        raise PreconditionError(f"supports {A.support} and {B.support} overlap")
    if not (set(A.support) | set(B.support)) <= set(region):
        raise PreconditionError("observables must be supported inside the region")
    return _curves(phi, region, A, [B], times, propagator)[0]


def _curves(phi, region, A, Bs, times, propagator=None) -> list[list[float]]:
    Bfull = [embed(B, region).matrix for B in Bs]
    masks = [_diagonal_signs(B, region) for B in Bs]
    out = [[] for _ in Bs]
    if phi.time_dependent:
        mats = _driven_series(phi, region, A, times)
    else:
        prop = propagator or Propagator.from_interaction(phi, region)
        A_eig = prop.to_eigenbasis(A)
        A_full = embed(A, region).matrix
        mats = (A_full if t == 0 else prop.heisenberg_matrix(A_eig, t) for t in times)
    herm = A.is_hermitian()
    for X in mats:
        for k, (Bf, mask) in enumerate(zip(Bfull, masks)):
            out[k].append(_commutator_norm(X, Bf, mask, herm))
    return out


def _driven_series(phi, region, A, times):
    """tau_{t_k, t_0}(A) along an increasing grid, composing step propagators."""
    M = embed(A, region).matrix
    U = np.eye(M.shape[0], dtype=complex)
    prev = times[0]
    for t in times:
        if t != prev:
            step, _ = driven_propagator(phi, region, prev, t, tol=DRIVEN_TOL * 0.1)
            U = step @ U
            prev = t
        yield U.conj().T @ M @ U


# -- Lieb-Robinson right-hand sides ---------------------------------------------

def pair_sum(F: FFunction, g: MetricGraph, X: Iterable[int], Y: Iterable[int]) -> float:
    X, Y = list(X), list(Y)
    return float(F(g.dist[np.ix_(X, Y)].astype(float)).sum())


def lr_rhs_general(F: FFunction, g: MetricGraph, phi: Interaction, A: LocalOperator, B: LocalOperator,
                   t: float, s: float = 0.0, cert=None, phi_norm_integral: float | None = None) -> float:
    """C_F^-1 2 ||A|| ||B|| (exp(2 int_s^t ||Phi(r)||_F dr) - 1) sum_{x in X, y in Y} F(d(x,y))."""
    if set(A.support) & set(B.support):
        raise PreconditionError(f"supports {A.support} and {B.support} overlap")
    if t == s:
        return 0.0
    cert = cert or certify(F, g)
    if phi_norm_integral is None:
        phi_norm_integral = interaction_norm_integral(phi, F, g, s, t)
    return (2.0 * op_norm(A) * op_norm(B) * math.expm1(2.0 * phi_norm_integral)
            * pair_sum(F, g, A.support, B.support) / cert.cF)


@dataclass(frozen=True)
class ExpBound:
    value: float
    v_lr: float
    C: float


def lr_rhs_exponential(F0: FFunction, a: float, g: MetricGraph, phi: Interaction, A: LocalOperator,
                       B: LocalOperator, t: float, theta: float = 1.0, cert=None) -> ExpBound:
    """C ||A|| ||B|| min(|X|, |Y|) exp(a (v_LR |t| - d(X, Y))).

    Here F = exp(-a r) F0, v_LR = 2 ||Phi||_F / a and C = 2 ||F0||_1 / C_F.
    """
    if theta != 1:
        raise FormError("the exponential form needs F = exp(-a r) F0 (theta = 1)")
    if phi.time_dependent:
        raise FormError("the exponential form needs a time-independent interaction")
    if set(A.support) & set(B.support):
        raise PreconditionError(f"supports {A.support} and {B.support} overlap")
    F = Weighted(a, 1.0, F0)
    cert = cert or certify(F, g)
    v_lr = 2.0 * interaction_norm(phi, F, g) / a
    C = 2.0 * norm_1(F0, g) / cert.cF
    d = g.set_distance(A.support, B.support)
    value = (C * op_norm(A) * op_norm(B) * min(len(A.support), len(B.support))
             * math.exp(a * (v_lr * abs(t) - d)))
    return ExpBound(value, v_lr, C)


# -- sweeps ---------------------------------------------------------------------

@dataclass
class LRScenario:
    graph: MetricGraph
    F: FFunction
    phi: Interaction
    times: np.ndarray
    A: list = field(default_factory=list)
    B: list = field(default_factory=list)
    pairs: list | None = None
    region: tuple | None = None
    jobs: int = 1

    def pair_list(self) -> list[tuple[LocalOperator, LocalOperator]]:
        """Explicit pairs as given, else all disjoint (A, B) combinations."""
        if self.pairs is not None:
            for A, B in self.pairs:
                if set(A.support) & set(B.support):
                    raise PreconditionError(f"pair with overlapping supports {A.support} / {B.support}")
            return list(self.pairs)
        return [(A, B) for A in self.A for B in self.B if not set(A.support) & set(B.support)]


@dataclass
class LRReport:
    pairs: list
    times: np.ndarray
    lhs: np.ndarray
    rhs_general: np.ndarray
    rhs_exp: np.ndarray | None
    violations: list
    v_lr: float | None
    v_emp: float | None = None
    constants: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_lr(sc: LRScenario) -> LRReport:
    """Evaluate ||[tau_t(A), B]|| and both bounds on every (pair, time) cell."""
    g, F, phi = sc.graph, sc.F, sc.phi
    region = _region(sc.region if sc.region is not None else g.sites)
    times = np.asarray(sc.times, dtype=float)
    if np.any(times < 0) or np.any(np.diff(times) < 0):
        raise PreconditionError("time grid must be non-negative and increasing")
    pairs = sc.pair_list()
    for A, B in pairs:
        if not (set(A.support) | set(B.support)) <= set(region):
            raise PreconditionError(f"pair {A.support} / {B.support} leaves the region")
    cert = certify(F, g)
    integrals = np.array([interaction_norm_integral(phi, F, g, 0.0, t) for t in times])

    # group pairs by A so each observable is evolved once
    order: dict = {}
    for k, (A, B) in enumerate(pairs):
        order.setdefault(id(A), (A, []))[1].append((k, B))
    prop = None if phi.time_dependent or not pairs else Propagator.from_interaction(phi, region)

    def work(item):
        A, rows = item
        return rows, _curves(phi, region, A, [B for _, B in rows], times, prop)

    lhs = np.zeros((len(pairs), len(times)))
    items = list(order.values())
    if sc.jobs > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=sc.jobs) as ex:
            results = list(ex.map(work, items))
    else:
        results = [work(it) for it in items]
    for rows, curves in results:
        for (k, _), curve in zip(rows, curves):
            lhs[k] = curve

    rhs = np.zeros_like(lhs)
    for k, (A, B) in enumerate(pairs):
        pref = 2.0 * op_norm(A) * op_norm(B) * pair_sum(F, g, A.support, B.support) / cert.cF
        rhs[k] = pref * np.expm1(2.0 * integrals)

    rhs_exp, v_lr, consts = None, None, {"cF": cert.cF, "norm1": cert.norm1}
    if not phi.time_dependent:
        consts["phi_norm"] = interaction_norm(phi, F, g)
    if isinstance(F, Weighted) and F.theta == 1 and not phi.time_dependent:
        v_lr = 2.0 * consts["phi_norm"] / F.a
        consts.update({"v_lr": v_lr, "C": 2.0 * norm_1(F.base, g) / cert.cF, "a": F.a})
        rhs_exp = np.array([[lr_rhs_exponential(F.base, F.a, g, phi, A, B, t, cert=cert).value
                             for t in times] for A, B in pairs]).reshape(lhs.shape)

    scale = np.array([op_norm(A) * op_norm(B) for A, B in pairs]).reshape(-1, 1)
    bad = np.argwhere(lhs > rhs * (1 + VIOLATION_RTOL) + VIOLATION_ATOL * scale)
    violations = [(int(k), int(j)) for k, j in bad]
    pair_info = [(A.support, B.support, g.set_distance(A.support, B.support)) for A, B in pairs]
    return LRReport(pair_info, times, lhs, rhs, rhs_exp, violations, v_lr, constants=consts)


@dataclass(frozen=True)
class VelocityFit:
    v_emp: float
    stderr: float
    intercept: float
    arrivals: dict


def arrival_time(times: np.ndarray, curve: np.ndarray, threshold: float) -> float | None:
    """First crossing of ``threshold``, linearly interpolated between grid points."""
    hit = np.flatnonzero(curve >= threshold)
    if hit.size == 0:
        return None
    k = int(hit[0])
    if k == 0:
        return float(times[0])
    t0, t1, c0, c1 = times[k - 1], times[k], curve[k - 1], curve[k]
    return float(t0 + (t1 - t0) * (threshold - c0) / (c1 - c0))


def fit_velocity(report: LRReport, threshold: float) -> VelocityFit:
    """Least-squares slope of distance against arrival time."""
    peak = float(report.lhs.max()) if report.lhs.size else 0.0
    if not 0 < threshold < peak:
        raise InsufficientDataError(f"threshold {threshold:g} outside (0, max lhs = {peak:g})")
    arrivals: dict = {}
    for (_, _, d), curve in zip(report.pairs, report.lhs):
        t_star = arrival_time(report.times, curve, threshold)
        if t_star is not None:
            arrivals[d] = min(arrivals.get(d, math.inf), t_star)
    if len(arrivals) < 3:
        raise InsufficientDataError(f"only {len(arrivals)} distances reach the threshold, need 3")
    ds = np.array(sorted(arrivals), dtype=float)
    ts = np.array([arrivals[d] for d in sorted(arrivals)])
    fit = stats.linregress(ts, ds)
    report.v_emp = float(fit.slope)
    return VelocityFit(float(fit.slope), float(fit.stderr), float(fit.intercept),
                       {int(d): float(arrivals[d]) for d in sorted(arrivals)})


def dynamics_difference(phi: Interaction, psi: Interaction, F: FFunction, g: MetricGraph,
                        region: Iterable[int], A: LocalOperator, t: float, s: float = 0.0):
    """(||tau^Phi(A) - tau^Psi(A)||, continuity bound) for time-independent Phi, Psi."""
    region = _region(region)
    dt = t - s
    lhs = matrix_norm(evolve(phi, region, A, dt).matrix - evolve(psi, region, A, dt).matrix)
    cert = certify(F, g)
    nphi, npsi = interaction_norm(phi, F, g), interaction_norm(psi, F, g)
    ndiff = interaction_norm(phi - psi, F, g)
    rhs = (2.0 * cert.norm1 / cert.cF * len(A.support) * op_norm(A) * abs(dt)
           * math.exp(2.0 * abs(dt) * min(nphi, npsi)) * ndiff)
    return lhs, rhs
