import warnings

import numpy as np
import pytest

from polariton_lattice.config import PhysicalConfig
from polariton_lattice.errors import ValidityWarning
from polariton_lattice.lattice import SpinModel

DENSE = dict(omega_ctrl=18.0, a=0.532, c6=256.45, n0=1e22, k_points=40)


def dense_config(n_sites=4, **extra) -> PhysicalConfig:
    """Band regime with a clean dark pair (see README)."""
    return PhysicalConfig.from_mhz(n_sites=n_sites, **{**DENSE, **extra})


@pytest.fixture(scope="session")
def dense_pipeline():
    from polariton_lattice.pipeline import build_model

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        return build_model(dense_config(4))


def random_model(rng, n, *, pump=None, blockade_sites=1, v_scale=1.0, beta=None) -> SpinModel:
    hop = np.zeros((n, n), np.complex128)
    for i in range(n):
        for j in range(i + 1, n):
            hop[j, i] = rng.normal() + 1j * rng.normal()
            hop[i, j] = np.conj(hop[j, i])
    v = np.abs(rng.normal(size=(n, n))) * v_scale
    v = np.triu(v, 1)
    v = v + v.T
    return SpinModel(
        hop, v,
        rng.normal() if beta is None else beta,
        abs(rng.normal()) + 0.1 if pump is None else pump,
        rng.uniform(0.05, 1.0, n),
        rng.uniform(0.1, 1.0),
        blockade_sites,
        hop[1, 0] if n > 1 else 1.0,
    )


def random_hermitian(rng, dim):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return x + x.conj().T


def random_density(rng, dim):
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho)
