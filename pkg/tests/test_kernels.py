import numpy as np
import pytest
from conftest import random_density, random_model
from hypothesis import given, settings
from hypothesis import strategies as st

from polariton_lattice import _accel, kernels
from polariton_lattice.operators import JumpSet, compile_model


@pytest.fixture
def both_backends():
    old = _accel.get_backend()

    def run(fn, *args, **kw):
        out = {}
        for name in ("numba", "numpy"):
            _accel.set_backend(name)
            res = fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in args], **kw)
            out[name] = res
        _accel.set_backend(old)
        return out["numba"], out["numpy"]

    yield run
    _accel.set_backend(old)


def compiled(seed, n):
    rng = np.random.default_rng(seed)
    model = random_model(rng, n)
    return rng, compile_model(model, JumpSet.from_model(model))


def test_backend_switch_rejects_unknown():
    with pytest.raises(ValueError):
        _accel.set_backend("fortran")


def test_heff_parity(both_backends):
    rng, c = compiled(1, 5)
    psi = rng.normal(size=c.dim) + 1j * rng.normal(size=c.dim)
    a, b = both_backends(kernels.heff_apply, psi, c.heff_diag, c.src, c.dst, c.amp)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_lindblad_and_rk4_parity(both_backends):
    rng, c = compiled(2, 4)
    rho = random_density(rng, c.dim)
    a, b = both_backends(kernels.lindblad_rhs, rho, c.heff_diag, c.src, c.dst, c.amp, c.rates)
    np.testing.assert_allclose(a, b, atol=1e-12)
    a, b = both_backends(kernels.rk4_density, rho, 50, 1e-3, c.heff_diag, c.src, c.dst, c.amp, c.rates)
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert abs(np.trace(a) - 1) < 1e-10


def test_evolve_until_parity(both_backends):
    rng, c = compiled(3, 4)
    psi = rng.normal(size=c.dim) + 1j * rng.normal(size=c.dim)
    psi /= np.linalg.norm(psi)
    a, b = both_backends(kernels.evolve_until, psi, 5.0, 1e-3, 0.7, 1e-10, c.heff_diag, c.src, c.dst, c.amp)
    assert a[0] == pytest.approx(b[0], abs=1e-12)
    assert a[1] == b[1]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_trace_norm_parity(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    x = x + x.conj().T
    old = _accel.set_backend("numba")
    a = kernels.trace_norm(x)
    _accel.set_backend("numpy")
    b = kernels.trace_norm(x)
    _accel.set_backend(old)
    assert a == pytest.approx(b, rel=1e-10)
    assert a == pytest.approx(np.abs(np.linalg.eigvalsh(x)).sum(), rel=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3), st.floats(0, 1))
def test_projection_is_feasible_and_idempotent(x, cap):
    for name in ("numba", "numpy"):
        old = _accel.set_backend(name)
        p = kernels.project_alpha(np.array(x), cap)
        q = kernels.project_alpha(p, cap)
        _accel.set_backend(old)
        assert np.linalg.norm(p) <= 1 + 1e-12
        assert 0.5 * (1 + p[2]) <= cap + 1e-12
        np.testing.assert_allclose(p, q, atol=1e-12)


def test_minimizer_parity_and_quadratic_optimum(both_backends):
    rng = np.random.default_rng(4)
    c1 = rng.normal(size=(3, 3, 4, 4)) + 1j * rng.normal(size=(3, 3, 4, 4))
    target = np.array([0.1, -0.2, 0.3])
    c0 = -np.einsum("m,jmab->jab", target, c1)
    a, b = both_backends(kernels.minimize_alpha, c0, c1, 1.0, 2, np.zeros(3), np.full(3, 0.1))
    np.testing.assert_allclose(a[0], b[0], atol=1e-9)
    np.testing.assert_allclose(a[0], target, atol=1e-6)
    assert a[3] and b[3]


def test_residual_coeff_parity(both_backends):
    rng = np.random.default_rng(5)
    sups = rng.normal(size=(3, 16, 16)) + 1j * rng.normal(size=(3, 16, 16))
    rho = np.stack([random_density(rng, 2) for _ in range(3)])
    from polariton_lattice.variational import PAULI

    a, b = both_backends(kernels.residual_coeffs, sups, rho, PAULI, np.array([0.1, 0.2, -0.5]), 0.5, 0.01)
    np.testing.assert_allclose(a[0], b[0], atol=1e-12)
    np.testing.assert_allclose(a[1], b[1], atol=1e-12)
