"""Dense local operators with explicit supports.

A :class:`LocalOperator` stores a matrix acting on the tensor product of the
sites in its support, with tensor factors in increasing site order.  Every
binary operation first embeds both operands into the union of supports, so
operators on different regions can be combined freely.
"""
from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import unitary_group

from .errors import AlgebraError, CapacityError, EmbeddingError, ScheduleError

DEFAULT_MAX_QUBITS = 12

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def max_qubits() -> int:
    """Dense-operator cap, overridable through ``QLL_MAX_QUBITS``."""
    return int(os.environ.get("QLL_MAX_QUBITS", DEFAULT_MAX_QUBITS))


def check_capacity(dims: Sequence[int]) -> None:
    dim = int(np.prod(dims)) if len(dims) else 1
    if dim > 2 ** max_qubits():
        raise CapacityError(
            f"operator dimension {dim} exceeds the {max_qubits()}-qubit cap "
            "(set QLL_MAX_QUBITS to override)"
        )


@dataclass(frozen=True, eq=False)
class LocalOperator:
    support: tuple
    matrix: np.ndarray
    dims: tuple

    def __post_init__(self):
        if list(self.support) != sorted(set(self.support)):
            raise AlgebraError("support must be strictly increasing; use local_op() to sort")
        if len(self.dims) != len(self.support):
            raise AlgebraError("need one site dimension per support site")
        dim = int(np.prod(self.dims)) if self.dims else 1
        if self.matrix.shape != (dim, dim):
            raise AlgebraError(f"matrix shape {self.matrix.shape} does not match dims {self.dims}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def site_dims(self) -> dict:
        return dict(zip(self.support, self.dims))

    def dag(self) -> "LocalOperator":
        return LocalOperator(self.support, self.matrix.conj().T, self.dims)

    def norm(self) -> float:
        return op_norm(self)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return bool(np.abs(self.matrix - self.matrix.conj().T).max(initial=0.0) <= tol)

    def __add__(self, other):
        if not isinstance(other, LocalOperator):
            return NotImplemented
        a, b = _common(self, other)
        return LocalOperator(a.support, a.matrix + b.matrix, a.dims)

    def __sub__(self, other):
        if not isinstance(other, LocalOperator):
            return NotImplemented
        a, b = _common(self, other)
        return LocalOperator(a.support, a.matrix - b.matrix, a.dims)

    def __neg__(self):
        return LocalOperator(self.support, -self.matrix, self.dims)

    def __mul__(self, c):
        if isinstance(c, LocalOperator):
            return NotImplemented
        return LocalOperator(self.support, c * self.matrix, self.dims)

    __rmul__ = __mul__

    def __matmul__(self, other):
        a, b = _common(self, other)
        return LocalOperator(a.support, a.matrix @ b.matrix, a.dims)

    def __repr__(self):
        return f"LocalOperator(support={self.support}, dim={self.dim})"


def local_op(matrix, support: Iterable[int], dims: Sequence[int] | int = 2) -> LocalOperator:
    """Build an operator on ``support`` given in any order.

    The tensor factors of ``matrix`` follow the order in which ``support``
    is listed; they are permuted into increasing site order.
    """
    support = [int(x) for x in support]
    if len(set(support)) != len(support):
        raise AlgebraError("support has repeated sites")
    if isinstance(dims, (int, np.integer)):
        dims = [int(dims)] * len(support)
    dims = [int(d) for d in dims]
    matrix = np.asarray(matrix, dtype=complex)
    order = sorted(range(len(support)), key=lambda k: support[k])
    if order != list(range(len(support))):
        matrix = _permute(matrix, dims, order)
    return LocalOperator(tuple(support[k] for k in order), matrix, tuple(dims[k] for k in order))


def identity(support: Iterable[int] = (), dims: Sequence[int] | int = 2) -> LocalOperator:
    support = sorted(support)
    if isinstance(dims, (int, np.integer)):
        dims = [int(dims)] * len(support)
    return LocalOperator(tuple(support), np.eye(int(np.prod(dims)) if dims else 1, dtype=complex), tuple(dims))


def zero(support: Iterable[int] = (), dims: Sequence[int] | int = 2) -> LocalOperator:
    return 0 * identity(support, dims)


def pauli(label: str, site: int) -> LocalOperator:
    return LocalOperator((int(site),), PAULI[label.upper()].copy(), (2,))


def pauli_string(string: Mapping[int, str], coeff: complex = 1.0) -> LocalOperator:
    """Tensor product of single-site Paulis, e.g. ``{0: "Z", 2: "X"}``."""
    items = sorted((int(k), v.upper()) for k, v in string.items())
    if not items:
        return coeff * identity()
    mat = np.array([[1.0 + 0j]])
    for _, lab in items:
        mat = np.kron(mat, PAULI[lab])
    return LocalOperator(tuple(k for k, _ in items), coeff * mat, (2,) * len(items))


def from_pauli_terms(terms: Sequence[Mapping]) -> LocalOperator:
    """Sum of ``{"coeff": [re, im], "string": {"0": "Z", ...}}`` entries."""
    total = None
    for term in terms:
        c = term.get("coeff", 1.0)
        if isinstance(c, (list, tuple)):
            c = complex(c[0], c[1] if len(c) > 1 else 0.0)
        op = pauli_string({int(k): v for k, v in term["string"].items()}, complex(c))
        total = op if total is None else total + op
    if total is None:
        raise AlgebraError("empty Pauli term list")
    return total


def _permute(matrix: np.ndarray, dims: Sequence[int], order: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: new factor k is old factor ``order[k]``."""
    n = len(dims)
    t = matrix.reshape(tuple(dims) * 2)
    t = t.transpose(list(order) + [n + k for k in order])
    dim = matrix.shape[0]
    return t.reshape(dim, dim)


def _merged_dims(ops: Sequence[LocalOperator], sites: Iterable[int], site_dims) -> dict:
    out = {}
    for op in ops:
        for x, d in zip(op.support, op.dims):
            if out.setdefault(x, d) != d:
                raise AlgebraError(f"site {x} carries dimensions {out[x]} and {d}")
    for x in sites:
        if x not in out:
            out[x] = site_dims.get(x, 2) if isinstance(site_dims, Mapping) else int(site_dims)
    return out


def embed(A: LocalOperator, target: Iterable[int], site_dims: int | Mapping = 2) -> LocalOperator:
    """A tensored with the identity on ``target \\ supp(A)``."""
    target = sorted(set(int(x) for x in target))
    if not set(A.support) <= set(target):
        raise EmbeddingError(f"support {A.support} not contained in {tuple(target)}")
    if tuple(target) == A.support:
        return A
    dmap = _merged_dims([A], target, site_dims)
    rest = [x for x in target if x not in A.support]
    rest_dims = [dmap[x] for x in rest]
    check_capacity(list(A.dims) + rest_dims)
    big = np.kron(A.matrix, np.eye(int(np.prod(rest_dims)), dtype=complex))
    current = list(A.support) + rest
    order = [current.index(x) for x in target]
    dims_now = list(A.dims) + rest_dims
    mat = _permute(big, dims_now, order)
    return LocalOperator(tuple(target), mat, tuple(dmap[x] for x in target))


def _common(A: LocalOperator, B: LocalOperator):
    sites = sorted(set(A.support) | set(B.support))
    dmap = _merged_dims([A, B], sites, 2)
    return embed(A, sites, dmap), embed(B, sites, dmap)


def matrix_norm(M: np.ndarray) -> float:
    """Spectral norm; eigenvalue route for (anti-)Hermitian input."""
    if M.size == 0:
        return 0.0
    scale = np.abs(M).max()
    if scale == 0:
        return 0.0
    H = M.conj().T
    if np.abs(M - H).max() <= 1e-14 * scale:
        return float(np.abs(np.linalg.eigvalsh(0.5 * (M + H))).max())
    if np.abs(M + H).max() <= 1e-14 * scale:
        return float(np.abs(np.linalg.eigvalsh(0.5j * (M - H))).max())
    return float(np.linalg.norm(M, 2))


def op_norm(A: LocalOperator) -> float:
    return matrix_norm(A.matrix)


def commutator(A: LocalOperator, B: LocalOperator) -> LocalOperator:
    a, b = _common(A, B)
    return LocalOperator(a.support, a.matrix @ b.matrix - b.matrix @ a.matrix, a.dims)


def conditional_expectation(A: LocalOperator, region: Iterable[int]) -> LocalOperator:
    """Normalized partial trace of A over ``supp(A) \\ region``.

    The result lives on ``supp(A) & region``; it stands for the identity
    tensored onto the rest of ``region``.
    """
    region = set(int(x) for x in region)
    keep = [k for k, x in enumerate(A.support) if x in region]
    drop = [k for k, x in enumerate(A.support) if x not in region]
    if not drop:
        return A
    n = len(A.support)
    t = A.matrix.reshape(A.dims * 2)
    t = t.transpose(keep + drop + [n + k for k in keep] + [n + k for k in drop])
    dk = int(np.prod([A.dims[k] for k in keep])) if keep else 1
    dd = int(np.prod([A.dims[k] for k in drop]))
    t = t.reshape(dk, dd, dk, dd)
    reduced = np.einsum("ajbj->ab", t) / dd
    return LocalOperator(tuple(A.support[k] for k in keep), reduced, tuple(A.dims[k] for k in keep))


def local_approx_error(A: LocalOperator, region: Iterable[int]) -> float:
    """||A - Pi_region(A)||."""
    P = conditional_expectation(A, region)
    return matrix_norm(A.matrix - embed(P, A.support, A.site_dims()).matrix)


def optimal_local_error(A: LocalOperator, region: Iterable[int]) -> float:
    """inf over B supported in ``region`` of ||A - B||, by convex optimization.

    Small-instance oracle only: solves a spectral-norm minimization over the
    full operator basis of the kept sites with cvxpy.
    """
    import cvxpy as cp

    region = set(int(x) for x in region)
    keep = [x for x in A.support if x in region]
    dmap = A.site_dims()
    dk = int(np.prod([dmap[x] for x in keep])) if keep else 1
    basis = []
    for i in range(dk):
        for j in range(dk):
            E = np.zeros((dk, dk), dtype=complex)
            E[i, j] = 1.0
            basis.append(embed(LocalOperator(tuple(keep), E, tuple(dmap[x] for x in keep)), A.support, dmap).matrix)
    x = cp.Variable(len(basis))
    y = cp.Variable(len(basis))
    M = A.matrix - sum((x[k] + 1j * y[k]) * basis[k] for k in range(len(basis)))
    prob = cp.Problem(cp.Minimize(cp.sigma_max(M)))
    prob.solve(solver=cp.CLARABEL)
    return float(prob.value)


def pauli_strings(sites: Sequence[int], max_weight: int | None = None) -> Iterable[LocalOperator]:
    """Non-identity Pauli strings on ``sites``, optionally up to a weight."""
    sites = list(sites)
    top = len(sites) if max_weight is None else min(max_weight, len(sites))
    for w in range(1, top + 1):
        for subset in itertools.combinations(sites, w):
            for labels in itertools.product("XYZ", repeat=w):
                yield pauli_string(dict(zip(subset, labels)))


def pauli_commutator_sup(A: LocalOperator, region: Iterable[int], ambient: Iterable[int],
                         max_weight: int | None = None) -> float:
    """max ||[A, P]|| over Pauli strings P on ``ambient \\ region``."""
    region = set(region)
    comp = [x for x in sorted(set(ambient)) if x not in region]
    best = 0.0
    for P in pauli_strings([x for x in comp if x in A.support], max_weight):
        best = max(best, op_norm(commutator(A, P)))
    return best


def commutator_locality(A: LocalOperator, region: Iterable[int], ambient: Iterable[int],
                        probes: int = 16, seed: int = 0) -> float:
    """Lower estimate of sup ||[A, B]|| over unit-norm B on ``ambient \\ region``.

    Always a lower bound of the true supremum.  With at most three complement
    qubits the Pauli basis is searched exhaustively; Pauli-twirling then gives
    ``||A - Pi(A)|| <= result``.  Larger complements use Pauli strings up to
    weight 2 plus ``probes`` Haar-random unitaries drawn with ``seed``.
    """
    region = set(int(x) for x in region)
    ambient = sorted(set(int(x) for x in ambient))
    if not set(A.support) <= set(ambient):
        raise EmbeddingError("operator support must lie inside the ambient region")
    comp = [x for x in ambient if x not in region]
    if not comp:
        return 0.0
    # B only matters through the sites it shares with A
    active = [x for x in comp if x in A.support]
    if not active:
        return 0.0
    dmap = A.site_dims()
    qubits = all(dmap[x] == 2 for x in active)
    if qubits and len(active) <= 3:
        return pauli_commutator_sup(A, region, ambient)
    best = pauli_commutator_sup(A, region, ambient, max_weight=2) if qubits else 0.0
    rng = np.random.default_rng(seed)
    dims = tuple(dmap[x] for x in active)
    dim = int(np.prod(dims))
    for _ in range(probes):
        U = unitary_group.rvs(dim, random_state=rng) if dim > 1 else np.eye(1, dtype=complex)
        best = max(best, op_norm(commutator(A, LocalOperator(tuple(active), U, dims))))
    return best


@dataclass(frozen=True)
class DecaySchedule:
    """Increasing regions Lambda_0 < Lambda_1 < ... with decay values f(n)."""

    volumes: tuple
    f: tuple

    def __post_init__(self):
        vols = tuple(frozenset(v) for v in self.volumes)
        object.__setattr__(self, "volumes", vols)
        object.__setattr__(self, "f", tuple(float(v) for v in self.f))
        if len(vols) != len(self.f) or not vols:
            raise ScheduleError("need one decay value per volume")
        for v0, v1 in zip(vols, vols[1:]):
            if not v0 < v1:
                raise ScheduleError("volumes must be strictly increasing")
        if any(v <= 0 for v in self.f):
            raise ScheduleError("decay values must be positive")
        if any(b > a for a, b in zip(self.f, self.f[1:])):
            raise ScheduleError("decay values must be non-increasing")

    @classmethod
    def balls(cls, graph, center: int, f) -> "DecaySchedule":
        """Balls of radius n = 0..diameter around ``center`` with weights f(n)."""
        from .lattice import ball

        vols, fs = [], []
        for r in range(graph.diameter + 1):
            b = ball(graph, center, r)
            if vols and b == vols[-1]:
                continue
            vols.append(b)
            fs.append(f(r))
        return cls(tuple(vols), tuple(fs))


def f_norm(A: LocalOperator, sched: DecaySchedule) -> float:
    """||A|| + max_n f(n)^-1 ||A - Pi_{Lambda_n}(A)|| over the schedule."""
    if not set(A.support) <= sched.volumes[-1]:
        raise ScheduleError("schedule volumes do not exhaust the operator support")
    tail = max(local_approx_error(A, v) / fn for v, fn in zip(sched.volumes, sched.f))
    return op_norm(A) + tail
