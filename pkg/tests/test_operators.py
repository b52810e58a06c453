from functools import reduce

import numpy as np
import pytest
from conftest import random_density, random_hermitian, random_model
from hypothesis import given, settings
from hypothesis import strategies as st

from polariton_lattice.errors import DimensionError
from polariton_lattice.lattice import SpinModel
from polariton_lattice.operators import (
    Jump,
    JumpSet,
    expectation,
    hamiltonian_apply,
    hamiltonian_sparse,
    liouvillian_apply,
    liouvillian_sparse,
    lower_site,
    occupations,
    populations,
    vacuum_density,
    vacuum_state,
)

SP = np.array([[0, 0], [1, 0]], complex)  # |1><0| with |0> first
SM = SP.T.copy()
NUM = SP @ SM


def site_op(op, i, n):
    # site 0 is the least significant bit, so it is the rightmost kron factor
    factors = [op if k == i else np.eye(2) for k in reversed(range(n))]
    return reduce(np.kron, factors)


def dense_h(model: SpinModel):
    n = model.n_sites
    h = np.zeros((2**n, 2**n), complex)
    for i in range(n):
        h += model.beta * site_op(NUM, i, n)
        for j in range(n):
            if i != j:
                h -= model.hopping[i, j] * site_op(SP, i, n) @ site_op(SM, j, n)
                h += model.interaction[i, j] * site_op(NUM, i, n) @ site_op(NUM, j, n)
    h += model.pump * (site_op(SP, 0, n) + site_op(SM, 0, n))
    return h


def dense_lindblad(model, jumps, rho):
    n = model.n_sites
    h = dense_h(model)
    out = -1j * (h @ rho - rho @ h)
    for jp in jumps:
        c = np.sqrt(jp.rate) * site_op(SM, jp.site, n)
        cd = c.conj().T
        out += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


def test_vacuum_and_occupations():
    assert populations(vacuum_state(3), 3).tolist() == [0, 0, 0]
    occ = occupations(3)
    assert occ[0b101].tolist() == [True, False, True]


def test_two_site_hop_moves_excitation():
    model = SpinModel.translation_invariant(2, [0.7], [0.0])
    psi = np.zeros(4, complex)
    psi[0b01] = 1.0  # excitation on site 0
    out = hamiltonian_apply(model, psi)
    # -J_10 sigma_1^+ sigma_0^- moves it to site 1
    assert out[0b10] == pytest.approx(-0.7)
    assert np.count_nonzero(out) == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_hamiltonian_matches_dense_kron(n, seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n)
    psi = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    np.testing.assert_allclose(hamiltonian_apply(model, psi), dense_h(model) @ psi, atol=1e-10)
    hs = hamiltonian_sparse(model).toarray()
    np.testing.assert_allclose(hs, dense_h(model), atol=1e-12)
    np.testing.assert_allclose(hs, hs.conj().T, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_lindbladian_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n)
    jumps = JumpSet.from_model(model)
    rho = random_density(rng, 2**n)
    drho = liouvillian_apply(model, jumps, rho)
    np.testing.assert_allclose(drho, dense_lindblad(model, jumps, rho), atol=1e-9)
    # trace preserving and Hermiticity preserving
    assert abs(np.trace(drho)) < 1e-10
    assert np.max(np.abs(drho - drho.conj().T)) < 1e-10
    sup = liouvillian_sparse(model, jumps)
    np.testing.assert_allclose((sup @ rho.reshape(-1)).reshape(rho.shape), drho, atol=1e-9)


def test_amplitude_damping_oracle():
    model = SpinModel(np.zeros((1, 1)), np.zeros((1, 1)), 0.0, 0.0, [0.8], 0.0, 1)
    jumps = JumpSet.from_model(model, left_output=False, right_output=False)
    rho = 0.5 * np.eye(2, dtype=complex)
    drho = liouvillian_apply(model, jumps, rho)
    # d n / dt = -gamma n for a single decaying two-level system
    assert drho[1, 1].real == pytest.approx(-0.8 * 0.5)
    assert drho[0, 0].real == pytest.approx(0.8 * 0.5)


def test_lower_site():
    rho = vacuum_density(2)
    rho[:] = 0
    rho[0b11, 0b11] = 1.0
    out = lower_site(rho, 1)
    assert out[0b01, 0b01] == 1.0
    psi = np.zeros(4, complex)
    psi[0b10] = 1
    assert lower_site(psi, 0).tolist() == [0, 0, 0, 0]


def test_expectation_names():
    model = SpinModel.translation_invariant(3, [0.5, 0.1], [2.0, 1.0], blockade_sites=2, j1=0.5)
    rho = np.diag([0.2, 0.3, 0.1, 0.0, 0.4, 0.0, 0.0, 0.0]).astype(complex)
    assert expectation(rho, "population(0)") == pytest.approx(0.3)
    assert expectation(rho, ("population", 2)) == pytest.approx(0.4)
    assert expectation(rho, "output_intensity", model) == pytest.approx(0.5 * 0.4)
    # window around site 1 of radius 2 covers all three sites
    assert expectation(rho, "blockade_window_sum(1)", model) == pytest.approx(0.3 + 0.1 + 0.4)
    with pytest.raises(KeyError):
        expectation(rho, "energy")


def test_dimension_checks():
    model = SpinModel.translation_invariant(2, [0.5], [0.0])
    with pytest.raises(DimensionError):
        hamiltonian_apply(model, np.ones(8))
    with pytest.raises(DimensionError):
        liouvillian_apply(model, JumpSet.from_model(model), np.eye(8))


def test_jump_set_validation():
    with pytest.raises(ValueError):
        JumpSet(2, (Jump(0, -1.0, "rydberg_decay"),))
    with pytest.raises(ValueError):
        JumpSet(2, (Jump(1, 1.0, "output_left"),))
    with pytest.raises(ValueError):
        JumpSet(2, (Jump(0, 1.0, "teleport"),))
    with pytest.raises(DimensionError):
        JumpSet(2, (Jump(3, 1.0, "rydberg_decay"),))
    model = SpinModel.translation_invariant(3, [1, 1], [0, 0], gamma=0.1, gamma_out=0.5)
    assert JumpSet.from_model(model).site_rates().tolist() == pytest.approx([0.6, 0.1, 0.6])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_hermitian_input_gives_hermitian_output(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng, 3)
    x = random_hermitian(rng, 8)
    out = liouvillian_apply(model, JumpSet.from_model(model), x)
    assert np.max(np.abs(out - out.conj().T)) < 1e-10 * (1 + np.abs(out).max())
