"""Steady-state polariton number of a ten-site chain pumped at P = 10 gamma_i."""

import warnings

import pytest
from conftest import dense_config

from polariton_lattice import variational as var
from polariton_lattice.errors import ValidityWarning
from polariton_lattice.operators import JumpSet
from polariton_lattice.pipeline import build_model

N = 10
PUMP_MHZ = 0.11867


@pytest.mark.slow
def test_ten_site_chain_holds_about_two_polaritons():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        model = build_model(dense_config(N, pump=PUMP_MHZ, gamma_out="equal_J1")).model
    # trajectories at N=10 need ~1.5 s per us each, so the product-state engine stands in
    run = var.variational_steady_state(model, JumpSet.from_model(model), t_max=80.0)
    assert run.stats["converged"]
    total = float(run.final.populations().sum())
    print(f"N={N} steady-state polariton number {total:.3f} (t={run.series.t[-1]:g} us)")
    assert 1.0 <= total <= 3.0, total
