import math

import numpy as np
import pytest
from conftest import random_model
from hypothesis import given, settings
from hypothesis import strategies as st

from polariton_lattice import exact
from polariton_lattice.errors import DimensionError, StepSizeError, UndefinedCorrelationError
from polariton_lattice.lattice import SpinModel
from polariton_lattice.operators import JumpSet, liouvillian_apply


def single_site(pump, gamma, gamma_out=0.0):
    model = SpinModel(np.zeros((1, 1)), np.zeros((1, 1)), 0.0, pump, [gamma], gamma_out, 1, 1.0)
    return model, JumpSet.from_model(model)


def chain(n, *, pump=0.5, gamma=0.05, gamma_out=0.3, v=2.0, j=1.0):
    hop = j / np.arange(1, n) ** 2 if n > 1 else [j]
    inter = v / np.arange(1, n) ** 6 if n > 1 else [0.0]
    model = SpinModel.translation_invariant(n, hop, inter, pump=pump, gamma=gamma, gamma_out=gamma_out,
                                            blockade_sites=1, j1=j)
    return model, JumpSet.from_model(model)


def test_rabi_flopping():
    model, jumps = single_site(0.9, 0.0)
    t = np.linspace(0, 5, 26)
    series, rho = exact.integrate_me(model, jumps, t_grid=t)
    np.testing.assert_allclose(series["pop_1"], np.sin(0.9 * t) ** 2, atol=1e-9)
    assert series.meta["max_trace_drift"] < 1e-10


def test_pure_decay():
    model, jumps = single_site(0.0, 0.7)
    rho0 = np.diag([0.0, 1.0]).astype(complex)
    t = np.linspace(0, 4, 9)
    series, _ = exact.integrate_me(model, jumps, rho0, t)
    np.testing.assert_allclose(series["pop_1"], np.exp(-0.7 * t), rtol=1e-9)


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_single_site_steady_state(pump, gamma):
    model, jumps = single_site(pump, gamma, gamma_out=0.1)
    ss = exact.steady_state(model, jumps)
    g_t = gamma + 2 * 0.1  # left and right outputs both sit on the only site
    assert ss.population(0) == pytest.approx(pump**2 / (2 * pump**2 + g_t**2 / 4), abs=1e-9)
    assert ss.residual < 1e-8


def test_steady_state_is_stationary():
    model, jumps = chain(4)
    ss = exact.steady_state(model, jumps)
    assert np.max(np.abs(liouvillian_apply(model, jumps, ss.rho))) < 1e-8
    np.testing.assert_allclose(ss.rho, ss.rho.conj().T, atol=1e-12)
    assert np.min(np.linalg.eigvalsh(ss.rho)) > -1e-10


def test_long_integration_reaches_steady_state():
    model, jumps = chain(3)
    ss = exact.steady_state(model, jumps)
    series, _ = exact.integrate_me(model, jumps, t_grid=np.linspace(0, 150, 4))
    pops = series.population_matrix()[-1]
    np.testing.assert_allclose(pops, [ss.population(i) for i in range(3)], atol=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_trace_drift_is_small(n, seed):
    model = random_model(np.random.default_rng(seed), n)
    series, rho = exact.integrate_me(model, JumpSet.from_model(model), t_grid=np.linspace(0, 1, 3))
    assert abs(np.trace(rho) - 1) < 1e-8
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-10


def test_oversized_step_is_rejected():
    model, jumps = chain(3)
    with pytest.raises(StepSizeError):
        exact.integrate_me(model, jumps, t_grid=np.linspace(0, 10, 3), dt=5.0)
    with pytest.raises(StepSizeError):
        exact.wfmc_run(model, jumps, t_grid=[0.0, 10.0], n_traj=1, dt=5.0)


def test_size_limits():
    model, jumps = chain(9)
    with pytest.raises(DimensionError):
        exact.integrate_me(model, jumps, t_grid=[0, 1])
    model, jumps = chain(7)
    with pytest.raises(DimensionError):
        exact.steady_state(model, jumps)


def test_single_site_g2():
    model, jumps = single_site(0.8, 1.0, gamma_out=0.2)
    g2 = exact.g2_exact(model, jumps, np.linspace(0, 30, 61))
    # driven two-level emitter: Rabi frequency 2P, total decay g
    g, om = 1.0 + 2 * 0.2, 2 * 0.8
    mu = math.sqrt(om**2 - g**2 / 16)
    tau = g2.t
    ref = 1 - np.exp(-3 * g * tau / 4) * (np.cos(mu * tau) + 3 * g / (4 * mu) * np.sin(mu * tau))
    np.testing.assert_allclose(g2["g2"], ref, atol=1e-7)
    assert g2["g2"][0] == pytest.approx(0.0, abs=1e-14)


def test_g2_undefined_without_drive():
    model, jumps = chain(2, pump=0.0)
    with pytest.raises(UndefinedCorrelationError):
        exact.g2_exact(model, jumps, [0.0, 1.0])


# ---------------------------------------------------------------- trajectories


def test_wfmc_unitary_limit():
    model, jumps = chain(3, gamma=0.0, gamma_out=0.0)
    t = np.linspace(0, 2, 5)
    wf = exact.wfmc_run(model, jumps, t_grid=t, n_traj=3, seed=1)
    me, _ = exact.integrate_me(model, jumps, t_grid=t)
    np.testing.assert_allclose(wf.population_matrix(), me.population_matrix(), atol=1e-8)
    assert np.all(wf.stderr["pop_1"] < 1e-10)
    assert sum(wf.meta["jump_counts"][k] for k in ("rydberg_decay", "output_left", "output_right")) == 0


def test_wfmc_is_bit_reproducible():
    model, jumps = chain(3)
    t = np.linspace(0, 3, 7)
    a = exact.wfmc_run(model, jumps, t_grid=t, n_traj=40, seed=11)
    b = exact.wfmc_run(model, jumps, t_grid=t, n_traj=40, seed=11)
    c = exact.wfmc_run(model, jumps, t_grid=t, n_traj=40, seed=12)
    for key in a.series:
        assert np.array_equal(a[key], b[key])
    assert not np.array_equal(a["pop_1"], c["pop_1"])


def test_trajectory_streams_are_order_independent():
    first = exact.trajectory_rng(5, 3).random(4)
    exact.trajectory_rng(5, 2).random(100)
    assert np.array_equal(first, exact.trajectory_rng(5, 3).random(4))


def test_wfmc_agrees_with_master_equation():
    model, jumps = chain(3, pump=0.6, gamma=0.2, gamma_out=0.5)
    t = np.linspace(0, 6, 7)
    wf = exact.wfmc_run(model, jumps, t_grid=t, n_traj=600, seed=3)
    me, _ = exact.integrate_me(model, jumps, t_grid=t)
    for i in range(1, 4):
        err = wf.stderr[f"pop_{i}"][1:]
        diff = np.abs(wf[f"pop_{i}"] - me[f"pop_{i}"])[1:]
        assert np.all(diff <= 3 * err + 1e-12)


def test_wfmc_input_checks():
    model, jumps = chain(2)
    with pytest.raises(ValueError):
        exact.wfmc_run(model, jumps, t_grid=[0, 1], n_traj=0)
    with pytest.raises(DimensionError):
        exact.wfmc_run(model, jumps, psi0=np.ones(3), t_grid=[0, 1])
