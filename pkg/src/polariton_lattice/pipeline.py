"""Band structure to spin model in one call."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bands import DARK_LOWER, DARK_UPPER, BandStructure, WannierBand, solve_bands, wannier_transform
from .config import PhysicalConfig
from .lattice import (SpinModel, assemble_spin_model, blockade_radii, effective_decay,
                      interaction_matrix)


@dataclass
class Pipeline:
    bands: BandStructure
    wannier: WannierBand
    radii: tuple
    interaction: np.ndarray
    gamma: np.ndarray
    model: SpinModel


def build_model(cfg: PhysicalConfig, *, band: str = DARK_UPPER, check_order: bool = True) -> Pipeline:
    """Solve bands, build the Wannier function of ``band`` and assemble the spin model."""
    bs = solve_bands(cfg)
    wb = wannier_transform(bs, band, cfg)
    j1 = complex(wb.hoppings[0]) if wb.hoppings.size else 0.0
    radii = blockade_radii(cfg, j1) if cfg.c6 > 0 and j1 != 0 else (0.0, 0.0)
    v = interaction_matrix(wb, radii[1], cfg, check_order=check_order)
    gamma = effective_decay(wb, cfg)
    other = DARK_LOWER if band == DARK_UPPER else DARK_UPPER
    lower = float(np.mean(bs.energies(other).real - bs.energies(band).real))
    model = assemble_spin_model(cfg, wb, v, gamma, r_b=radii[1], lower_band_energy=lower)
    return Pipeline(bs, wb, radii, v, gamma, model)
