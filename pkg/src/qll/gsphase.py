"""Ground states, gaps, and quasi-adiabatic transport along interaction paths.

The quasi-adiabatic generator at parameter s is

    D(s) = sum_X int w(t) int_0^t tau_u^{(s)}(Phi'(X, s)) du dt,

evaluated in the eigenbasis of H(s): the inner integral is exact there, and
the outer one uses Gauss-Legendre quadrature on [-T, T] with node doubling.
Ground states are transported by V_k = exp(i h D(s_mid)).
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from . import algebra
from .algebra import LocalOperator, embed, matrix_norm
from .errors import GapClosingError, IntegrationError, ParameterError, PreconditionError
from .interactions import Interaction, InteractionPath, local_hamiltonian

log = logging.getLogger(__name__)

DEG_TOL = 1e-8
QUAD_TOL = 1e-6
ENVELOPE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GroundStateData:
    volume: tuple
    energies: np.ndarray
    vectors: np.ndarray
    deg_tol: float
    gap: float
    degeneracy: int

    @property
    def gapped(self) -> bool:
        return self.gap > 0

    @property
    def ground_vector(self) -> np.ndarray:
        return self.vectors[:, 0]


def _gap_from_spectrum(E: np.ndarray, deg_tol: float):
    above = np.flatnonzero(E - E[0] > deg_tol)
    if above.size == 0:
        return 0.0, len(E), None
    k = int(above[0])
    return float(E[k] - E[0]), k, k


def ground_data(phi: Interaction, region: Iterable[int], k: int = 2, deg_tol: float = DEG_TOL,
                t: float = 0.0) -> GroundStateData:
    """Lowest k eigenpairs of H_region and the gap above the ground space."""
    region = tuple(sorted(set(int(x) for x in region)))
    algebra.check_capacity([2] * len(region))
    if k < 2:
        raise ParameterError("need at least two levels to define a gap")
    H = local_hamiltonian(phi, region, t).matrix
    E, V = np.linalg.eigh(H)
    if k > len(E):
        log.warning("k=%d exceeds dimension %d; clipping", k, len(E))
        k = len(E)
    gap, deg, _ = _gap_from_spectrum(E, deg_tol)
    return GroundStateData(region, E[:k].copy(), V[:, :k].copy(), deg_tol, gap, deg)


# -- gap condition --------------------------------------------------------------

@dataclass(frozen=True)
class GapCheck:
    lhs: float
    rhs: float
    vector: int = 0

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    @property
    def ok(self) -> bool:
        return self.margin >= -1e-9


def _gap_terms(H: np.ndarray, psi: np.ndarray, A: np.ndarray, gamma: float):
    """<psi| Abar* [H, Abar] |psi> and gamma <psi| Abar* Abar |psi> for centred Abar."""
    mean = np.vdot(psi, A @ psi)
    Abar_psi = A @ psi - mean * psi
    H_psi = H @ psi
    comm_psi = H @ Abar_psi - (A @ H_psi - mean * H_psi)
    lhs = np.vdot(Abar_psi, comm_psi).real
    rhs = gamma * np.vdot(Abar_psi, Abar_psi).real
    return float(lhs), float(rhs)


def check_gap_condition(data: GroundStateData, phi: Interaction, observables: Sequence[LocalOperator]):
    """Test <Abar* [H, Abar]> >= gap <Abar* Abar> with Abar = A - <A>.

    Returns ``(checks, degenerate)``.  For a unique ground state there is one
    check per observable; otherwise one per (observable, ground vector).
    """
    H = local_hamiltonian(phi, data.volume).matrix
    degenerate = data.degeneracy > 1
    vecs = range(min(data.degeneracy, data.vectors.shape[1])) if degenerate else [0]
    out = []
    for A in observables:
        if not set(A.support) <= set(data.volume):
            raise PreconditionError(f"observable on {A.support} leaves the volume")
        M = embed(A, data.volume).matrix
        for j in vecs:
            lhs, rhs = _gap_terms(H, data.vectors[:, j], M, data.gap)
            out.append(GapCheck(lhs, rhs, j))
    return out, degenerate


# -- gap scans --------------------------------------------------------------------

@dataclass
class GapScan:
    rows: list            # (n, s, E0, E1, gap)
    min_gap: dict         # volume size -> (s, gap)
    closings: list        # (n, s, gap) below floor

    def curve(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        sel = [(s, gap) for m, s, _, _, gap in self.rows if m == n]
        return np.array([s for s, _ in sel]), np.array([g for _, g in sel])


def _level_pair(phi: Interaction, region: tuple, deg_tol: float):
    H = local_hamiltonian(phi, region).matrix
    E = np.linalg.eigvalsh(H)
    gap, _, k = _gap_from_spectrum(E, deg_tol)
    return float(E[0]), float(E[k]) if k is not None else float(E[0]), gap


def gap_scan(path: InteractionPath, volumes: Sequence[Iterable[int]], s_grid: Sequence[float],
             floor: float = 0.0, deg_tol: float = DEG_TOL, jobs: int = 1) -> GapScan:
    """Gap along the path for each volume; flags points with gap <= floor."""
    s_grid = [float(s) for s in s_grid]
    volumes = [tuple(sorted(set(v))) for v in volumes]
    if not s_grid or not volumes:
        raise ParameterError("gap scan needs non-empty grids")
    cells = [(v, s) for v in volumes for s in s_grid]

    def work(cell):
        v, s = cell
        return _level_pair(path.phi(s), v, deg_tol)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            levels = list(ex.map(work, cells))
    else:
        levels = [work(c) for c in cells]
    rows, min_gap, closings = [], {}, []
    for (v, s), (e0, e1, gap) in zip(cells, levels):
        n = len(v)
        rows.append((n, s, e0, e1, gap))
        if n not in min_gap or gap < min_gap[n][1]:
            min_gap[n] = (s, gap)
        if gap <= floor:
            closings.append((n, s, gap))
    return GapScan(rows, min_gap, closings)


# -- weight function ----------------------------------------------------------------

@dataclass(frozen=True)
class WeightFunction:
    """Even, L1-normalized filter w(t); Gaussian of width 1/xi by default.

    ``c`` and ``eta`` are the constants of the decay envelope
    c xi |t| exp(-eta xi |t| / ln(xi |t|)^2), used by :func:`weight_bound`.
    """

    xi: float
    form: str = "gaussian"
    c: float = 1.0
    eta: float = 2.0 / 7.0 + 0.01

    def __post_init__(self):
        if self.xi <= 0:
            raise ParameterError("xi must be positive")
        if self.form != "gaussian":
            raise ParameterError(f"unknown weight form {self.form!r}")
        if self.c <= 0 or self.eta <= 2.0 / 7.0:
            raise ParameterError("envelope needs c > 0 and eta > 2/7")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.xi / math.sqrt(2 * math.pi) * np.exp(-0.5 * (self.xi * t) ** 2)

    def fourier(self, omega):
        """int w(t) exp(i omega t) dt."""
        return np.exp(-0.5 * (np.asarray(omega, dtype=float) / self.xi) ** 2)

    def t_max(self, envelope: float = ENVELOPE_TOL) -> float:
        """Smallest T with w(t) < envelope for |t| >= T."""
        peak = self.xi / math.sqrt(2 * math.pi)
        if peak <= envelope:
            return 0.0
        return math.sqrt(2.0 * math.log(peak / envelope)) / self.xi

    def l1_norm(self) -> float:
        val, _ = integrate.quad(self, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
        return float(val)


def weight_bound(w: WeightFunction, t: float):
    """(w(t), envelope) with the envelope only defined for xi |t| > e."""
    value = float(w(t))
    x = w.xi * abs(t)
    if x <= math.e:
        return value, None
    return value, w.c * x * math.exp(-w.eta * x / math.log(x) ** 2)


# -- quasi-adiabatic generator ----------------------------------------------------------

def _filter_kernel(w: WeightFunction, omega: np.ndarray, nodes: int) -> np.ndarray:
    """sum_j w_j w(t_j) (exp(i t_j omega) - 1) / (i omega), t in [-T, T]."""
    T = w.t_max()
    x, wts = np.polynomial.legendre.leggauss(nodes)
    ts, wts = T * x, T * wts * w(T * x)
    K = np.zeros(omega.shape, dtype=complex)
    small = np.abs(omega) < 1e-12
    om = np.where(small, 1.0, omega)
    for tj, cj in zip(ts, wts):
        K += cj * np.where(small, tj, (np.exp(1j * tj * om) - 1.0) / (1j * om))
    return K


def _generator_matrix(E, V, dH_eig, w: WeightFunction, nodes: int, tol: float, max_doublings: int = 10):
    omega = E[:, None] - E[None, :]
    prev = None
    n = nodes
    for _ in range(max_doublings + 1):
        D_eig = _filter_kernel(w, omega, n) * dH_eig
        D = V @ D_eig @ V.conj().T
        D = 0.5 * (D + D.conj().T)
        if prev is not None and matrix_norm(D - prev) < tol:
            return D, n
        prev = D
        n *= 2
    raise IntegrationError(f"quadrature did not converge to {tol:g} with {n // 2} nodes")


def _path_derivative(path: InteractionPath, s: float, region: tuple) -> np.ndarray:
    dphi = path.dphi(s)
    return local_hamiltonian(dphi, region).matrix


def hastings_generator(path: InteractionPath, s: float, w: WeightFunction, region: Iterable[int],
                       nodes: int = 64, tol: float = QUAD_TOL, deg_tol: float = DEG_TOL) -> LocalOperator:
    """Hermitian quasi-adiabatic generator D(s) on ``region``."""
    region = tuple(sorted(set(int(x) for x in region)))
    algebra.check_capacity([2] * len(region))
    H = local_hamiltonian(path.phi(s), region).matrix
    E, V = np.linalg.eigh(H)
    gap, _, _ = _gap_from_spectrum(E, deg_tol)
    if not 0 < w.xi < gap:
        raise ParameterError(f"xi = {w.xi:g} must lie in (0, gap = {gap:g}) at s = {s:g}")
    dH = _path_derivative(path, s, region)
    D, _ = _generator_matrix(E, V, V.conj().T @ dH @ V, w, nodes, tol)
    return LocalOperator(region, D, (2,) * len(region))


# -- spectral flow -------------------------------------------------------------------------

@dataclass
class FlowResult:
    s_grid: np.ndarray
    transported_states: list
    exact_states: list
    fidelities: np.ndarray
    gap_curve: np.ndarray
    unitaries: list = field(repr=False, default_factory=list)
    xi: float = 0.0
    nodes: int = 0

    def max_unitarity_error(self) -> float:
        eye = np.eye(self.unitaries[0].shape[0])
        return max(matrix_norm(U.conj().T @ U - eye) for U in self.unitaries)


def _unique_ground(phi: Interaction, region: tuple, deg_tol: float):
    H = local_hamiltonian(phi, region).matrix
    E, V = np.linalg.eigh(H)
    gap, deg, _ = _gap_from_spectrum(E, deg_tol)
    return H, E, V, gap, deg


def auto_xi(path: InteractionPath, region: Iterable[int], s_grid: Sequence[float],
            deg_tol: float = DEG_TOL) -> float:
    """Half the smallest gap over the grid points and step midpoints."""
    region = tuple(sorted(set(region)))
    s_grid = np.asarray(s_grid, dtype=float)
    pts = np.concatenate([s_grid, 0.5 * (s_grid[1:] + s_grid[:-1])])
    return 0.5 * min(_level_pair(path.phi(s), region, deg_tol)[2] for s in pts)


def spectral_flow(path: InteractionPath, w: WeightFunction | None, region: Iterable[int],
                  s_grid: Sequence[float], floor: float = 0.0, nodes: int = 64,
                  tol: float = QUAD_TOL, deg_tol: float = DEG_TOL) -> FlowResult:
    """Transport the ground state of H(s_0) along the grid with exp(i h D(s_mid))."""
    region = tuple(sorted(set(int(x) for x in region)))
    algebra.check_capacity([2] * len(region))
    s_grid = np.asarray(s_grid, dtype=float)
    if s_grid.ndim != 1 or len(s_grid) < 1:
        raise ParameterError("s grid must be a non-empty list")
    if w is None:
        w = WeightFunction(auto_xi(path, region, s_grid, deg_tol))

    def ground(s):
        _, E, V, gap, deg = _unique_ground(path.phi(s), region, deg_tol)
        if gap <= floor or deg > 1:
            raise GapClosingError(
                f"gap {gap:.6g} (degeneracy {deg}) at s = {s:.6g} violates floor {floor:g}", s=s, gap=gap)
        return V[:, 0], gap

    psi0, gap0 = ground(s_grid[0])
    dim = len(psi0)
    U = np.eye(dim, dtype=complex)
    transported, exact, fids, gaps, unitaries = [psi0.copy()], [psi0.copy()], [1.0], [gap0], [U.copy()]
    used_nodes = nodes
    for s0, s1 in zip(s_grid[:-1], s_grid[1:]):
        h = s1 - s0
        mid = 0.5 * (s0 + s1)
        H = local_hamiltonian(path.phi(mid), region).matrix
        E, V = np.linalg.eigh(H)
        gap_mid, deg_mid, _ = _gap_from_spectrum(E, deg_tol)
        if gap_mid <= floor or deg_mid > 1:
            raise GapClosingError(f"gap {gap_mid:.6g} at s = {mid:.6g} violates floor {floor:g}", s=mid, gap=gap_mid)
        if not 0 < w.xi < gap_mid:
            raise ParameterError(f"xi = {w.xi:g} must lie in (0, gap = {gap_mid:g}) at s = {mid:g}")
        dH = _path_derivative(path, mid, region)
        D, used = _generator_matrix(E, V, V.conj().T @ dH @ V, w, nodes, tol)
        used_nodes = max(used_nodes, used)
        if D.any():
            ev, W = np.linalg.eigh(D)
            U = ((W * np.exp(1j * h * ev)) @ W.conj().T) @ U
        psi_ex, gap = ground(s1)
        phi_t = U @ psi0
        transported.append(phi_t)
        exact.append(psi_ex)
        fids.append(min(1.0, abs(np.vdot(psi_ex, phi_t))))
        gaps.append(gap)
        unitaries.append(U.copy())
    return FlowResult(s_grid, transported, exact, np.array(fids), np.array(gaps), unitaries, w.xi, used_nodes)


@dataclass(frozen=True)
class TransportCheck:
    s: float
    observable: int
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs


def gap_transport_check(flow: FlowResult, path: InteractionPath, region: Iterable[int],
                        observables: Sequence[LocalOperator], deg_tol: float = DEG_TOL) -> list[TransportCheck]:
    """Gap inequality for the transported states with the conjugated generator.

    With alpha_s(A) = V(s)* A V(s), the transported state is V(s) psi_0 and
    delta_s(A) = V(s) [H(0), V(s)* A V(s)] V(s)*, i.e. the commutator with
    V(s) H(0) V(s)*.  The reference gap is that of H(0).
    """
    region = tuple(sorted(set(int(x) for x in region)))
    H0, _, _, gap0, deg = _unique_ground(path.phi(float(flow.s_grid[0])), region, deg_tol)
    if deg > 1:
        raise PreconditionError("transport check needs a unique initial ground state")
    mats = [embed(A, region).matrix for A in observables]
    out = []
    for s, U, phi_s in zip(flow.s_grid, flow.unitaries, flow.transported_states):
        Hs = U @ H0 @ U.conj().T
        for k, M in enumerate(mats):
            lhs, rhs = _gap_terms(Hs, phi_s, M, gap0)
            out.append(TransportCheck(float(s), k, lhs, rhs))
    return out
