import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from qll import algebra, gsphase, interactions as itx, lattice
from qll.algebra import pauli, pauli_string
from qll.errors import GapClosingError, ParameterError


def tfim(n, J=1.0, g=1.0):
    return itx.preset("tfim", lattice.build_chain(n), J=J, g=g)


def tfim_path(n, g0, g1):
    return itx.linear_path(tfim(n, g=g0), tfim(n, g=g1))


def test_single_site_spectrum():
    d = gsphase.ground_data(tfim(1, g=0.7), [0])
    np.testing.assert_allclose(d.energies, [-0.7, 0.7])
    assert d.gap == pytest.approx(1.4) and d.degeneracy == 1


def test_classical_ising_degenerate():
    d = gsphase.ground_data(tfim(2, g=0.0), [0, 1], k=4)
    H = np.diag([-1.0, 1.0, 1.0, -1.0])
    E = np.linalg.eigvalsh(H)
    assert d.degeneracy == 2
    assert d.gap == pytest.approx(E[2] - E[0]) == 2.0


def test_zero_interaction_gapless():
    d = gsphase.ground_data(itx.zero_interaction(), [0, 1])
    assert not d.gapped


def test_k_clipped(caplog):
    d = gsphase.ground_data(tfim(1), [0], k=5)
    assert len(d.energies) == 2
    assert "clipping" in caplog.text


def test_eigen_residuals():
    phi = tfim(5, g=1.3)
    d = gsphase.ground_data(phi, range(5), k=6)
    H = itx.local_hamiltonian(phi, range(5)).matrix
    for E, v in zip(d.energies, d.vectors.T):
        assert np.linalg.norm(H @ v - E * v) <= 1e-9
    np.testing.assert_allclose(d.vectors.conj().T @ d.vectors, np.eye(6), atol=1e-10)


def spectral_lhs(H, psi, A):
    """Independent oracle: sum_m (E_m - E_0) |<m|Abar psi>|^2 from the full spectrum."""
    E, V = np.linalg.eigh(H)
    Abar_psi = A @ psi - np.vdot(psi, A @ psi) * psi
    amps = np.abs(V.conj().T @ Abar_psi) ** 2
    return float(((E - E[0]) * amps).sum()), float(amps.sum())


def test_gap_condition_identity():
    phi = tfim(4, g=2.0)
    d = gsphase.ground_data(phi, range(4))
    checks, degenerate = gsphase.check_gap_condition(d, phi, [algebra.identity([0])])
    assert not degenerate
    assert checks[0].lhs == pytest.approx(0, abs=1e-12) and checks[0].rhs == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("label", "XYZ")
def test_gap_condition_matches_spectral_oracle(label):
    phi = tfim(4, g=2.0)
    d = gsphase.ground_data(phi, range(4))
    H = itx.local_hamiltonian(phi, range(4)).matrix
    obs = [pauli(label, x) for x in range(4)]
    checks, _ = gsphase.check_gap_condition(d, phi, obs)
    for A, c in zip(obs, checks):
        lhs, weight = spectral_lhs(H, d.ground_vector, algebra.embed(A, range(4)).matrix)
        assert c.lhs == pytest.approx(lhs, abs=1e-10)
        assert c.rhs == pytest.approx(d.gap * weight, abs=1e-10)
        assert c.ok


def test_gap_condition_symmetry_sector():
    """Total Sz commutes with XXZ; a sector-changing raising operator costs at least the gap."""
    g = lattice.build_chain(4)
    phi = itx.preset("xxz", g, J=1, Delta=1.5, h=0.0)
    d = gsphase.ground_data(phi, range(4))
    A = pauli_string({0: "X", 1: "X"}) + 0.5 * pauli_string({2: "Y"})
    checks, degenerate = gsphase.check_gap_condition(d, phi, [A])
    assert all(c.ok for c in checks)
    H = itx.local_hamiltonian(phi, range(4)).matrix
    for c in checks:
        lhs, _ = spectral_lhs(H, d.vectors[:, c.vector], algebra.embed(A, range(4)).matrix)
        assert c.lhs == pytest.approx(lhs, abs=1e-10)


def test_gap_condition_degenerate_flag():
    phi = tfim(3, g=0.0)
    d = gsphase.ground_data(phi, range(3), k=4)
    checks, degenerate = gsphase.check_gap_condition(d, phi, [pauli("X", 1)])
    assert degenerate and len(checks) == d.degeneracy


def test_gap_scan_constant_path():
    p = tfim(4, g=2.0)
    scan = gsphase.gap_scan(itx.linear_path(p, p), [range(4)], np.linspace(0, 1, 5))
    _, gaps = scan.curve(4)
    assert np.ptp(gaps) < 1e-12


def test_gap_scan_paramagnet():
    scan = gsphase.gap_scan(tfim_path(8, 2, 4), [range(4), range(6), range(8)], np.linspace(0, 1, 11), floor=0.5)
    assert not scan.closings
    for n in (4, 6, 8):
        assert scan.min_gap[n][1] > 0.5
        # free-fermion gap of the open chain is bounded below by 2 (g - J)
        assert scan.min_gap[n][1] >= 2.0 - 1e-9


def test_gap_scan_through_critical_point():
    scan = gsphase.gap_scan(tfim_path(8, 0.2, 2), [range(4), range(6), range(8)], np.linspace(0, 1, 19))
    mins = [scan.min_gap[n][1] for n in (4, 6, 8)]
    assert mins[0] > mins[1] > mins[2]
    # the minimum lies on the ordered side of g = 1
    assert all(0.2 + 1.8 * scan.min_gap[n][0] < 1.0 for n in (4, 6, 8))


def test_gap_scan_parallel_deterministic():
    path = tfim_path(6, 2, 3)
    a = gsphase.gap_scan(path, [range(4), range(6)], np.linspace(0, 1, 6))
    b = gsphase.gap_scan(path, [range(4), range(6)], np.linspace(0, 1, 6), jobs=4)
    assert a.rows == b.rows


def test_weight_function():
    w = gsphase.WeightFunction(1.3)
    assert w.l1_norm() == pytest.approx(1.0, abs=1e-8)
    ts = np.linspace(0, 7, 29)
    np.testing.assert_array_equal(w(ts), w(-ts))
    assert gsphase.weight_bound(w, 0.0)[1] is None
    with pytest.raises(ParameterError):
        gsphase.WeightFunction(1.0, eta=0.2)


def test_weight_bound_region():
    w = gsphase.WeightFunction(1.0)
    value, bound = gsphase.weight_bound(w, 10.0)
    assert value == pytest.approx(math.exp(-50) / math.sqrt(2 * math.pi), rel=1e-12)
    for t in np.linspace(3, 50, 200):
        v, b = gsphase.weight_bound(w, t)
        assert b is not None and v <= b


def test_weight_fourier_matches_quadrature():
    w = gsphase.WeightFunction(0.8)
    for om in (0.0, 0.5, 2.0):
        re, _ = integrate.quad(lambda t: w(t) * math.cos(om * t), -60, 60, limit=200)
        assert w.fourier(om) == pytest.approx(re, abs=1e-10)


def closed_form_generator(path, s, w, region):
    """Independent oracle: kernel i (1 - w_hat(omega)) / omega in the eigenbasis."""
    H = itx.local_hamiltonian(path.phi(s), region).matrix
    dH = itx.local_hamiltonian(path.dphi(s), region).matrix
    E, V = np.linalg.eigh(H)
    om = E[:, None] - E[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        K = np.where(np.abs(om) < 1e-12, 0.0, 1j * (1 - w.fourier(om)) / om)
    return V @ (K * (V.conj().T @ dH @ V)) @ V.conj().T


def test_generator_constant_path_zero():
    p = tfim(3, g=2)
    D = gsphase.hastings_generator(itx.linear_path(p, p), 0.5, gsphase.WeightFunction(1.0), range(3))
    assert np.abs(D.matrix).max() == 0


def test_generator_matches_closed_form():
    path = tfim_path(4, 2, 3)
    w = gsphase.WeightFunction(1.0)
    D = gsphase.hastings_generator(path, 0.5, w, range(4))
    assert D.is_hermitian(1e-10)
    np.testing.assert_allclose(D.matrix, closed_form_generator(path, 0.5, w, range(4)), atol=1e-6)


def test_generator_quadrature_converged():
    path = tfim_path(4, 2, 3)
    w = gsphase.WeightFunction(1.0)
    a = gsphase.hastings_generator(path, 0.5, w, range(4), nodes=64).matrix
    b = gsphase.hastings_generator(path, 0.5, w, range(4), nodes=128).matrix
    assert np.linalg.norm(a - b, 2) < 1e-6


def test_generator_xi_outside_gap():
    with pytest.raises(ParameterError):
        gsphase.hastings_generator(tfim_path(4, 2, 3), 0.5, gsphase.WeightFunction(10.0), range(4))


def test_flow_constant_path():
    p = tfim(4, g=2)
    flow = gsphase.spectral_flow(itx.linear_path(p, p), None, range(4), np.linspace(0, 1, 6))
    np.testing.assert_allclose(flow.fidelities, 1.0, atol=1e-14)
    np.testing.assert_array_equal(flow.unitaries[-1], np.eye(16))


def test_flow_tfim_small():
    path = tfim_path(4, 2, 3)
    flow = gsphase.spectral_flow(path, None, range(4), np.linspace(0, 1, 26))
    assert flow.fidelities.min() >= 0.99
    assert flow.max_unitarity_error() <= 1e-8
    assert np.all((flow.fidelities >= 0) & (flow.fidelities <= 1))


def test_flow_round_trip():
    path = tfim_path(4, 2, 3)
    grid = np.linspace(0, 1, 21)
    fwd = gsphase.spectral_flow(path, None, range(4), grid)
    back = gsphase.spectral_flow(path.reversed(), gsphase.WeightFunction(fwd.xi), range(4), grid)
    psi0 = fwd.exact_states[0]
    round_trip = back.unitaries[-1] @ fwd.unitaries[-1] @ psi0
    assert abs(np.vdot(psi0, round_trip)) >= 0.99


def test_flow_refinement_monotone():
    path = tfim_path(4, 2, 3)
    w = gsphase.WeightFunction(gsphase.auto_xi(path, range(4), np.linspace(0, 1, 21)))
    coarse = gsphase.spectral_flow(path, w, range(4), np.linspace(0, 1, 11)).fidelities[-1]
    fine = gsphase.spectral_flow(path, w, range(4), np.linspace(0, 1, 21)).fidelities[-1]
    assert fine >= coarse - 1e-3


def test_flow_gap_closing():
    with pytest.raises(GapClosingError) as exc:
        gsphase.spectral_flow(tfim_path(4, 2, 0.5), gsphase.WeightFunction(0.3), range(4),
                              np.linspace(0, 1, 11), floor=1.0)
    assert 0 < exc.value.s < 1


def test_transport_check():
    path = tfim_path(4, 2, 3)
    flow = gsphase.spectral_flow(path, None, range(4), np.linspace(0, 1, 11))
    obs = [pauli("X", 0), pauli("Z", 1)]
    checks = gsphase.gap_transport_check(flow, path, range(4), obs)
    assert min(c.margin for c in checks) >= -1e-6
    d = gsphase.ground_data(path.phi(0.0), range(4))
    ref, _ = gsphase.check_gap_condition(d, path.phi(0.0), obs)
    for c, r in zip([c for c in checks if c.s == 0.0], ref):
        assert c.lhs == pytest.approx(r.lhs, abs=1e-12)


def test_transport_constant_path():
    p = tfim(4, g=2)
    path = itx.linear_path(p, p)
    flow = gsphase.spectral_flow(path, None, range(4), np.linspace(0, 1, 5))
    margins = [c.margin for c in gsphase.gap_transport_check(flow, path, range(4), [pauli("Z", 2)])]
    assert np.ptp(margins) < 1e-12


@given(st.floats(1.2, 4.0), st.integers(0, 3), st.sampled_from("XYZ"))
def test_gap_condition_property(g, site, label):
    phi = tfim(4, g=g)
    d = gsphase.ground_data(phi, range(4))
    checks, degenerate = gsphase.check_gap_condition(d, phi, [pauli(label, site)])
    assert not degenerate and checks[0].ok
