import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, linalg

from qll import algebra, dynamics, ffunc, interactions as itx, lattice
from qll.algebra import LocalOperator, pauli, pauli_string
from qll.errors import FormError, InsufficientDataError, PreconditionError

P11 = ffunc.PowerLaw(1, 1)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])


def expm_heisenberg(H, A, t):
    """Independent oracle via scipy's Pade exponential."""
    U = linalg.expm(-1j * t * H)
    return U.conj().T @ A @ U


def ode_propagator(phi, region, t0, t1):
    """Independent oracle: integrate i dU/dt = H(t) U with an adaptive Runge-Kutta solver."""
    dim = 2 ** len(region)
    Hs = {X_: algebra.embed(op, region).matrix for X_, op in phi.terms.items() if X_ <= set(region)}

    def H(t):
        return sum(phi.coefficient(K, t) * M for K, M in Hs.items())

    def rhs(t, y):
        return (-1j * H(t) @ y.reshape(dim, dim)).ravel()

    sol = integrate.solve_ivp(rhs, (t0, t1), np.eye(dim, dtype=complex).ravel(), method="DOP853",
                              rtol=1e-12, atol=1e-12)
    return sol.y[:, -1].reshape(dim, dim)


def tfim(n, J=1.0, g=1.0, **kw):
    return itx.preset("tfim", lattice.build_chain(n), J=J, g=g, **kw)


def driven_tfim(n):
    field = itx.Profile((0.0, 0.5, 1.5), (0.3, 1.4, -0.6))
    return tfim(n, J=1.0, g=1.0, field_profile=field)


def test_evolve_t0_identity():
    A = pauli("X", 1)
    np.testing.assert_array_equal(dynamics.evolve(tfim(3), range(3), A, 0.0).matrix,
                                  algebra.embed(A, range(3)).matrix)


def test_conserved_observable():
    phi = tfim(3, g=0.0)
    A = pauli_string({0: "Z", 1: "Z"})
    Af = algebra.embed(A, range(3)).matrix
    for t in (0.3, 2.0):
        np.testing.assert_allclose(dynamics.evolve(phi, range(3), A, t).matrix, Af, atol=1e-12)


@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_single_site_rotation(t):
    phi = itx.Interaction({frozenset({0}): pauli("Z", 0)})
    got = dynamics.evolve(phi, [0], pauli("X", 0), t).matrix
    np.testing.assert_allclose(got, math.cos(2 * t) * X - math.sin(2 * t) * Y, atol=1e-10)


def test_evolve_matches_expm():
    phi = itx.preset("xxz", lattice.build_chain(4), J=1, Delta=0.4, h=0.3)
    H = itx.local_hamiltonian(phi, range(4)).matrix
    A = pauli_string({1: "X", 2: "Z"})
    np.testing.assert_allclose(dynamics.evolve(phi, range(4), A, 0.7).matrix,
                               expm_heisenberg(H, algebra.embed(A, range(4)).matrix, 0.7), atol=1e-11)


def test_propagator_unitary():
    prop = dynamics.Propagator.from_interaction(tfim(4), range(4))
    U = prop.unitary(1.3)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(16), atol=1e-10)
    H = itx.local_hamiltonian(tfim(4), range(4)).matrix
    np.testing.assert_allclose(U, linalg.expm(-1.3j * H), atol=1e-10)


def test_evolve_outside_region():
    with pytest.raises(PreconditionError):
        dynamics.evolve(tfim(3), [0, 1], pauli("X", 2), 1.0)


@given(st.integers(0, 2**31 - 1), st.floats(-2, 2), st.floats(-2, 2))
def test_group_and_automorphism(seed, t, s):
    rng = np.random.default_rng(seed)
    phi = tfim(3, g=0.9)
    R = range(3)
    M = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    N = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    A, B = LocalOperator((0, 1, 2), M, (2,) * 3), LocalOperator((0, 1, 2), N, (2,) * 3)
    tA = dynamics.evolve(phi, R, A, t)
    scale = np.linalg.norm(M, 2)
    assert algebra.op_norm(tA) == pytest.approx(scale, rel=1e-10)
    ts_A = dynamics.evolve(phi, R, dynamics.evolve(phi, R, A, s), t)
    np.testing.assert_allclose(ts_A.matrix, dynamics.evolve(phi, R, A, t + s).matrix, atol=1e-9 * scale)
    prod = dynamics.evolve(phi, R, A @ B, t).matrix
    np.testing.assert_allclose(prod, tA.matrix @ dynamics.evolve(phi, R, B, t).matrix,
                               atol=1e-10 * scale * np.linalg.norm(N, 2))
    np.testing.assert_allclose(dynamics.evolve(phi, R, A.dag(), t).matrix, tA.matrix.conj().T, atol=1e-10 * scale)


def test_driven_constant_profile_matches_static():
    const = itx.Profile((0.0,), (1.0,))
    phi = tfim(3, g=0.8, field_profile=const)
    A = pauli("Z", 0)
    got = dynamics.evolve_driven(phi, range(3), A, 0.0, 1.2).matrix
    ref = dynamics.evolve(tfim(3, g=0.8), range(3), A, 1.2).matrix
    np.testing.assert_allclose(got, ref, atol=1e-8)


def test_driven_same_time_identity():
    A = pauli("X", 1)
    got = dynamics.evolve_driven(driven_tfim(3), range(3), A, 0.4, 0.4)
    np.testing.assert_array_equal(got.matrix, algebra.embed(A, range(3)).matrix)


def test_driven_matches_ode_oracle():
    phi = driven_tfim(3)
    U, n = dynamics.driven_propagator(phi, range(3), 0.0, 1.5, tol=1e-9)
    assert n > 1
    np.testing.assert_allclose(U, ode_propagator(phi, range(3), 0.0, 1.5), atol=1e-7)


def test_driven_cocycle():
    phi = driven_tfim(3)
    R = range(3)
    A = pauli_string({0: "Z", 2: "X"})
    s, u, t = 0.1, 0.7, 1.4
    whole = dynamics.evolve_driven(phi, R, A, s, t).matrix
    inner = dynamics.evolve_driven(phi, R, A, u, t)
    composed = dynamics.evolve_driven(phi, R, inner, s, u).matrix
    assert np.linalg.norm(whole - composed, 2) < 1e-7


def test_driven_kink_not_skipped():
    """Both coarse grids put every midpoint past the knots; splitting at knots must still resolve them."""
    prof = itx.Profile((0.2379, 0.6020, 0.6134), (-0.2374, -0.9817, -0.1034))
    phi = tfim(2, J=0.7697, field_profile=prof)
    U, _ = dynamics.driven_propagator(phi, (0, 1), 0.5785, 0.8857)
    np.testing.assert_allclose(U, ode_propagator(phi, (0, 1), 0.5785, 0.8857), atol=1e-8)


def test_driven_backward_is_inverse():
    phi = driven_tfim(2)
    fwd, _ = dynamics.driven_propagator(phi, (0, 1), 0.2, 1.1)
    back, _ = dynamics.driven_propagator(phi, (0, 1), 1.1, 0.2)
    np.testing.assert_allclose(back @ fwd, np.eye(4), atol=1e-8)


def test_commutator_curve_basic():
    phi = tfim(4)
    assert dynamics.commutator_curve(phi, range(4), pauli("Z", 0), pauli("Z", 3), [0.0])[0] == 0.0
    zero = itx.zero_interaction()
    assert max(dynamics.commutator_curve(zero, range(4), pauli("X", 0), pauli("Z", 2), [0.5, 1, 3])) == 0.0
    with pytest.raises(PreconditionError):
        dynamics.commutator_curve(phi, range(4), pauli("Z", 0), pauli("X", 0), [1.0])


def test_commutator_curve_dense_oracle():
    phi = tfim(6)
    H = itx.local_hamiltonian(phi, range(6)).matrix
    Af = algebra.embed(pauli("Z", 0), range(6)).matrix
    Bf = algebra.embed(pauli("Z", 5), range(6)).matrix
    At = expm_heisenberg(H, Af, 1.0)
    oracle = np.linalg.norm(At @ Bf - Bf @ At, 2)
    got = dynamics.commutator_curve(phi, range(6), pauli("Z", 0), pauli("Z", 5), [1.0])[0]
    assert oracle > 0
    assert got == pytest.approx(oracle, rel=1e-9)


def test_commutator_fast_path_non_diagonal_B():
    phi = tfim(4)
    B = pauli_string({2: "X", 3: "Y"})
    H = itx.local_hamiltonian(phi, range(4)).matrix
    At = expm_heisenberg(H, algebra.embed(pauli("Z", 0), range(4)).matrix, 0.8)
    Bf = algebra.embed(B, range(4)).matrix
    got = dynamics.commutator_curve(phi, range(4), pauli("Z", 0), B, [0.8])[0]
    assert got == pytest.approx(np.linalg.norm(At @ Bf - Bf @ At, 2), rel=1e-9)


def test_rhs_general_trivial():
    g = lattice.build_chain(3)
    phi = tfim(3)
    assert dynamics.lr_rhs_general(P11, g, phi, pauli("Z", 0), pauli("Z", 2), 1.0, s=1.0) == 0.0
    assert dynamics.lr_rhs_general(P11, g, phi, algebra.zero([0]), pauli("Z", 2), 1.0) == 0.0


def test_rhs_general_plug_in():
    g = lattice.build_chain(6)
    phi = tfim(6)
    T = np.array([[float(P11(abs(x - y))) for y in range(6)] for x in range(6)])
    cF = max((T @ T)[x, y] / T[x, y] for x in range(6) for y in range(6))
    # ||tfim(1,1)||_F: bulk diagonal carries two bonds and a field, the bond pair carries 1 / F(1)
    phi_norm = max(3.0, 4.0)
    expected = 2.0 / cF * math.expm1(2.0 * phi_norm) * float(P11(5))
    got = dynamics.lr_rhs_general(P11, g, phi, pauli("Z", 0), pauli("Z", 5), 1.0)
    assert got == pytest.approx(expected, rel=1e-12)


def test_rhs_exponential():
    g = lattice.build_chain(6)
    phi = tfim(6)
    A, B = pauli("Z", 0), pauli("Z", 5)
    F = ffunc.Weighted(1.0, 1.0, P11)
    b0 = dynamics.lr_rhs_exponential(P11, 1.0, g, phi, A, B, 0.0)
    cert = ffunc.certify(F, g)
    assert b0.C == pytest.approx(2 * ffunc.norm_1(P11, g) / cert.cF, rel=1e-14)
    assert b0.value == pytest.approx(b0.C * math.exp(-5), rel=1e-14)
    assert b0.v_lr == pytest.approx(2 * itx.interaction_norm(phi, F, g), rel=1e-14)
    b2 = dynamics.lr_rhs_exponential(P11, 1.0, g, 2.0 * phi, A, B, 0.0)
    assert b2.v_lr == pytest.approx(2 * b0.v_lr, rel=1e-14)
    with pytest.raises(FormError):
        dynamics.lr_rhs_exponential(P11, 1.0, g, phi, A, B, 1.0, theta=0.5)
    with pytest.raises(FormError):
        dynamics.lr_rhs_exponential(P11, 1.0, g, driven_tfim(6), A, B, 1.0)


def scenario(n, F=P11, phi=None, times=None, **kw):
    g = lattice.build_chain(n)
    phi = phi if phi is not None else itx.preset("tfim", g, J=1, g=1)
    zs = [pauli("Z", x) for x in range(n)]
    return dynamics.LRScenario(g, F, phi, np.arange(0, 2.0001, 0.1) if times is None else times,
                               A=kw.pop("A", zs), B=kw.pop("B", zs), **kw)


def test_verify_lr_zero_interaction():
    rep = dynamics.verify_lr(scenario(4, phi=itx.zero_interaction()))
    assert rep.ok and rep.lhs.max() == 0.0


def test_verify_lr_small_sweep():
    rep = dynamics.verify_lr(scenario(5))
    assert rep.ok
    assert len(rep.pairs) == 20
    assert np.all(np.diff(rep.rhs_general, axis=1) >= 0)


def test_verify_lr_driven():
    g = lattice.build_chain(3)
    rep = dynamics.verify_lr(scenario(3, phi=driven_tfim(3), times=np.linspace(0, 1.5, 4)))
    assert rep.ok and rep.rhs_exp is None
    # check one driven cell against the ODE oracle
    U = ode_propagator(driven_tfim(3), tuple(g.sites), 0.0, 1.5)
    Af = algebra.embed(pauli("Z", 0), range(3)).matrix
    Bf = algebra.embed(pauli("Z", 2), range(3)).matrix
    At = U.conj().T @ Af @ U
    k = [i for i, (a, b, _) in enumerate(rep.pairs) if a == (0,) and b == (2,)][0]
    assert rep.lhs[k, -1] == pytest.approx(np.linalg.norm(At @ Bf - Bf @ At, 2), rel=1e-6)


def test_verify_lr_parallel_matches_serial():
    a = dynamics.verify_lr(scenario(4))
    b = dynamics.verify_lr(scenario(4, jobs=3))
    np.testing.assert_array_equal(a.lhs, b.lhs)


def test_overlapping_explicit_pairs():
    sc = scenario(3, pairs=[(pauli("Z", 0), pauli("X", 0))])
    with pytest.raises(PreconditionError):
        dynamics.verify_lr(sc)


def test_exponential_dominance():
    rep = dynamics.verify_lr(scenario(5, F=ffunc.Weighted(1.0, 1.0, P11)))
    assert rep.ok
    assert np.all(rep.rhs_general <= rep.rhs_exp * (1 + 1e-9))
    assert np.all(rep.lhs <= rep.rhs_exp)


def test_arrival_time_interpolates():
    assert dynamics.arrival_time(np.array([0, 1, 2.0]), np.array([0, 0.5, 1.0]), 0.75) == pytest.approx(1.5)
    assert dynamics.arrival_time(np.array([0, 1.0]), np.array([0, 0.1]), 0.5) is None


def test_fit_velocity_errors():
    frozen = dynamics.verify_lr(scenario(4, phi=itx.zero_interaction()))
    with pytest.raises(InsufficientDataError):
        dynamics.fit_velocity(frozen, 1e-3)
    rep = dynamics.verify_lr(scenario(4))
    with pytest.raises(InsufficientDataError):
        dynamics.fit_velocity(rep, 10 * rep.lhs.max())


def test_fit_velocity_regression_oracle():
    rep = dynamics.verify_lr(scenario(6, F=ffunc.Weighted(1.0, 1.0, P11), times=np.arange(0, 3.0001, 0.05),
                                      A=[pauli("Z", 0)]))
    fit = dynamics.fit_velocity(rep, 1e-2)
    ds = np.array(sorted(fit.arrivals), float)
    ts = np.array([fit.arrivals[d] for d in sorted(fit.arrivals)])
    slope = np.polyfit(ts, ds, 1)[0]
    assert fit.v_emp == pytest.approx(slope, rel=1e-10)
    assert fit.v_emp + fit.stderr <= rep.v_lr


def test_dynamics_difference():
    g = lattice.build_chain(6)
    phi, psi = tfim(6), tfim(6, g=1.1)
    A = pauli("Z", 0)
    lhs, rhs = dynamics.dynamics_difference(phi, phi, P11, g, range(6), A, 1.0)
    assert lhs == 0.0 and rhs == 0.0
    assert dynamics.dynamics_difference(phi, psi, P11, g, range(6), A, 0.0)[0] == 0.0
    lhs, rhs = dynamics.dynamics_difference(phi, psi, P11, g, range(6), A, 1.0)
    H1 = itx.local_hamiltonian(phi, range(6)).matrix
    H2 = itx.local_hamiltonian(psi, range(6)).matrix
    Af = algebra.embed(A, range(6)).matrix
    oracle = np.linalg.norm(expm_heisenberg(H1, Af, 1.0) - expm_heisenberg(H2, Af, 1.0), 2)
    assert lhs == pytest.approx(oracle, rel=1e-9)
    assert 0 < lhs <= rhs
