from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg

from qwbattery.protocols import (
    DischargeUnitary,
    Strategy,
    antidiagonal_protocol,
    complete_basis,
    localized_search_discharge,
    matrix_log_potential,
    mixed_optimal_unitary,
    permutation_unitary,
    phase_fidelity,
    pure_discharge_unitary,
    spin_chain_protocol,
    strategy_unitaries,
)
from qwbattery.spectral import evolution_operator
from qwbattery.thermo import (
    QuantumState,
    eigen_state,
    energy,
    ergotropy,
    inverse_thermal_state,
    localized_state,
    passive_state,
    thermal_inverse_ergotropy_closed_form,
    thermal_state,
)

from conftest import cell, haar_unitary, random_density


def test_discharge_unitary_validation():
    with pytest.raises(ValueError):
        DischargeUnitary(np.array([[1, 1], [0, 1]]), Strategy.ERG)


def test_complete_basis_reproducible():
    v = np.array([0, 1, 1j, 0]) / math.sqrt(2)
    b = complete_basis(v)
    assert np.allclose(b[:, 0], v)
    assert np.allclose(b.conj().T @ b, np.eye(4), atol=1e-12)
    assert np.array_equal(b, complete_basis(v))


def test_pure_discharge_top_ring4():
    h = cell("ring", 4)
    top = eigen_state(h.spectrum, 3)
    u = pure_discharge_unitary(top, h.spectrum)
    after = u.apply(top)
    assert abs(energy(after, h) + 2) < 1e-12
    assert abs(u.work(top, h) - 4) < 1e-12


def test_pure_discharge_maps_to_ground_up_to_phase(rng):
    h = cell("wheel", 6)
    psi = rng.normal(size=6) + 1j * rng.normal(size=6)
    psi /= np.linalg.norm(psi)
    u = pure_discharge_unitary(QuantumState.pure(psi), h.spectrum)
    out = u.matrix @ psi
    assert abs(abs(np.vdot(h.spectrum.eigenvectors[:, 0], out)) - 1) < 1e-10
    assert abs(u.work(QuantumState.pure(psi), h) - ergotropy(QuantumState.pure(psi), h)) < 1e-9


def test_pure_discharge_ground_extracts_nothing():
    h = cell("ring", 5)
    g = eigen_state(h.spectrum, 0)
    assert abs(pure_discharge_unitary(g, h.spectrum).work(g, h)) < 1e-12


def test_localized_complete5():
    h = cell("complete", 5)
    x = localized_state(5, 0)
    u = pure_discharge_unitary(x, h.spectrum)
    assert abs(u.work(x, h) - 4) < 1e-12
    # With x_0 first, the completion is x_1..x_4 in order: U = sum |phi_l><x_l|.
    assert np.allclose(u.matrix, h.spectrum.eigenvectors, atol=1e-12)


def test_mixed_optimal_inverse_thermal():
    h = cell("ring", 3)
    rho = inverse_thermal_state(h, 1.0)
    u = mixed_optimal_unitary(rho, h.spectrum)
    assert abs(u.work(rho, h) - thermal_inverse_ergotropy_closed_form("ring3", 3, 1.0)) < 1e-9
    assert np.max(np.abs(u.apply(rho).matrix - passive_state(rho, h).matrix)) < 1e-9


def test_mixed_optimal_random(rng):
    h = cell("wheel", 7)
    for _ in range(5):
        rho = QuantumState.mixed(random_density(rng, 7))
        u = mixed_optimal_unitary(rho, h.spectrum)
        assert abs(u.work(rho, h) - ergotropy(rho, h)) < 1e-9


def test_mixed_optimal_on_passive_and_top():
    h = cell("ring", 4)
    th = thermal_state(h, 0.5)
    assert abs(mixed_optimal_unitary(th, h.spectrum).work(th, h)) < 1e-9
    v = h.spectrum.eigenvectors[:, 3]
    top = QuantumState.mixed(np.outer(v, v.conj()))
    assert abs(mixed_optimal_unitary(top, h.spectrum).work(top, h) - 4) < 1e-9


def test_permutation_properties(rng):
    h = cell("wheel", 9)
    p = permutation_unitary(h.spectrum)
    assert np.allclose(p.matrix @ p.matrix, np.eye(9), atol=1e-10)
    top = eigen_state(h.spectrum, 8)
    assert abs(p.work(top, h) - 6) < 1e-10
    psi = rng.normal(size=9) + 1j * rng.normal(size=9)
    psi /= np.linalg.norm(psi)
    assert np.allclose(p.matrix @ (p.matrix @ psi), psi, atol=1e-10)


@pytest.mark.parametrize("kind,n,key", [("ring", 3, "ring3"), ("ring", 4, "ring4"), ("complete", 6, "complete")])
def test_permutation_maps_thermal_to_inverse(kind, n, key):
    h = cell(kind, n)
    for beta in (0.3, 1.0, 3.0):
        th = thermal_state(h, beta)
        out = permutation_unitary(h.spectrum).apply(th)
        expected = inverse_thermal_state(h, beta)
        r1 = h.spectrum.to_energy_basis(out.matrix)
        r2 = h.spectrum.to_energy_basis(expected.matrix)
        assert np.max(np.abs(r1 - r2)) < 1e-10
        assert abs(ergotropy(out, h) - thermal_inverse_ergotropy_closed_form(key, n, beta)) < 1e-9


def test_matrix_log_identity():
    plan = matrix_log_potential(np.eye(4), 2.0)
    assert np.allclose(plan.h_middle, 0)


def test_matrix_log_permutation_ring3():
    p = permutation_unitary(cell("ring", 3).spectrum)
    plan = matrix_log_potential(p, 1.0)
    assert np.max(np.abs(plan.propagator() - p.matrix)) < 1e-9
    assert np.max(np.abs(scipy.linalg.expm(-1j * plan.h_middle) - p.matrix)) < 1e-9


def test_matrix_log_minus_one_branch():
    u = np.diag([1.0, -1.0, -1.0, 1j]).astype(complex)
    plan = matrix_log_potential(u, 1.0)
    w = np.linalg.eigvalsh(plan.h_middle)
    assert np.isclose(w.min(), -math.pi)
    assert np.max(np.abs(plan.propagator() - u)) < 1e-9


def test_matrix_log_random(rng):
    for n in (2, 5, 8):
        for _ in range(10):
            u = haar_unitary(rng, n)
            plan = matrix_log_potential(u, 0.7)
            assert np.max(np.abs(scipy.linalg.expm(-0.7j * plan.h_middle) - u)) < 1e-9


def test_matrix_log_errors():
    with pytest.raises(ValueError):
        matrix_log_potential(np.eye(2), 0)
    with pytest.raises(ValueError):
        matrix_log_potential(np.array([[1, 1], [0, 1]]), 1.0)


def test_spin_chain_ring4():
    h = cell("ring", 4)
    plan = spin_chain_protocol(h.spectrum, 1.0)
    assert plan.t_star == pytest.approx(math.pi)
    top = h.spectrum.eigenvectors[:, 3]
    out = plan.propagator() @ top
    assert abs(np.vdot(h.spectrum.eigenvectors[:, 0], out)) ** 2 >= 1 - 1e-9


def test_spin_chain_xi_scaling():
    s = cell("wheel", 6).spectrum
    a, b = spin_chain_protocol(s, 1.0), spin_chain_protocol(s, 2.0)
    assert b.t_star == pytest.approx(a.t_star / 2)
    assert np.allclose(a.propagator(), b.propagator(), atol=1e-10)


def test_antidiagonal_quarter_period():
    for n in (3, 4, 7):
        s = cell("ring", n).spectrum
        plan = antidiagonal_protocol(s, 1.0)
        p = permutation_unitary(s).matrix
        half = (np.eye(n) - 1j * p) / math.sqrt(2)
        assert phase_fidelity(plan.propagator(math.pi / 4), half) >= 1 - 1e-12
        assert plan.t_star == pytest.approx(math.pi / 2)


def test_plan_potential_and_window():
    h = cell("ring", 4)
    plan = antidiagonal_protocol(h.spectrum, 1.0)
    assert np.allclose(plan.potential + h.matrix, plan.h_middle)
    assert plan.h_tot(-0.1) is plan.h_cell and plan.h_tot(0.5) is plan.h_middle


def test_protocol_parameter_errors():
    s = cell("ring", 4).spectrum
    with pytest.raises(ValueError):
        spin_chain_protocol(s, 0)
    with pytest.raises(ValueError):
        antidiagonal_protocol(s, -1)


def test_localized_search_complete():
    r64 = localized_search_discharge("complete", 64)
    assert r64.fidelity >= 0.98
    assert 0 < r64.t_star <= 20
    r4 = localized_search_discharge("complete", 4)
    assert 0 <= r4.fidelity <= 1 + 1e-12
    # The earliest maximal peak sits at the two-level estimate.
    assert abs(r64.t_star - r64.reduced_estimate) < 1e-6


def test_localized_search_wheel():
    r = localized_search_discharge("wheel", 64)
    assert r.fidelity >= 0.9
    # The uniform state is not the wheel ground state.
    assert r.ground_fidelity < 0.9


def test_localized_search_errors():
    with pytest.raises(ValueError):
        localized_search_discharge("ring", 8)
    with pytest.raises(ValueError):
        localized_search_discharge("complete", 3)


def test_localized_search_plan_reproduces_fidelity():
    r = localized_search_discharge("complete", 16)
    psi = r.plan.propagator() @ np.eye(16)[0]
    uniform = np.full(16, 0.25)
    assert abs(abs(np.vdot(uniform, psi)) ** 2 - r.fidelity) < 1e-9
    assert np.allclose(np.diag(r.plan.potential), [-16] + [0] * 15)


def test_strategy_unitaries_t0_coincide():
    h = cell("ring", 4)
    x = localized_state(4, 0)
    us = strategy_unitaries(x, x, x, h.spectrum)
    works = [u.work(x, h) for u in us.values()]
    assert np.allclose(works, 2, atol=1e-12)


def test_strategy_free_from_propagator():
    h = cell("ring", 5)
    x = localized_state(5, 0)
    t = 0.8
    prop = evolution_operator(h.spectrum, t)
    free = QuantumState.pure(prop @ x.vector)
    us = strategy_unitaries(free, free, x, h.spectrum, free_propagator=prop)
    assert abs(us[Strategy.FREE].work(free, h) - ergotropy(free, h)) < 1e-9
    assert set(us) == {Strategy.ERG, Strategy.FREE, Strategy.ZERO}
