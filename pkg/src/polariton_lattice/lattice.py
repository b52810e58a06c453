"""Interacting N-site hard-core model: blockade radii, van der Waals matrix,
effective decay and the assembled :class:`SpinModel`."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import EQUAL_J1, PhysicalConfig
from .errors import (
    ConfigError,
    DimensionError,
    NumericalWarning,
    UnsupportedInteractionError,
    ValidityWarning,
)


@dataclass(frozen=True, eq=False)
class SpinModel:
    """Hard-core lattice model.

    ``hopping[i, j]`` is J_ij (Hermitian, zero diagonal), ``interaction[i, j]`` is
    V_ij (symmetric, non-negative).  ``j1`` is the nearest-neighbour hopping of
    the underlying band; it fixes the output-intensity scale even for N = 1.
    Site indices are 0-based; the pump acts on site 0.
    """

    hopping: np.ndarray
    interaction: np.ndarray
    beta: float
    pump: float
    gamma_site: np.ndarray
    gamma_out: float
    blockade_sites: int
    j1: complex = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        hop = np.array(self.hopping, dtype=np.complex128)
        inter = np.array(self.interaction, dtype=np.float64)
        gam = np.array(self.gamma_site, dtype=np.float64).reshape(-1)
        n = gam.shape[0]
        if hop.shape != (n, n) or inter.shape != (n, n):
            raise DimensionError(
                f"inconsistent sizes: hopping {hop.shape}, interaction {inter.shape}, gamma_site ({n},)"
            )
        if n < 1:
            raise DimensionError("model needs at least one site")
        if np.any(np.diag(hop) != 0):
            raise ConfigError("hopping diagonal must vanish")
        if not np.allclose(hop, hop.conj().T, rtol=0, atol=1e-12 * (1 + np.abs(hop).max())):
            raise ConfigError("hopping matrix must be Hermitian")
        if not np.allclose(inter, inter.T, rtol=0, atol=1e-12 * (1 + np.abs(inter).max())):
            raise ConfigError("interaction matrix must be symmetric")
        if np.any(inter < 0) or np.any(gam < 0):
            raise ConfigError("interaction and decay rates must be non-negative")
        if not (self.gamma_out >= 0 and self.pump >= 0):
            raise ConfigError("gamma_out and pump must be non-negative")
        if int(self.blockade_sites) < 0:
            raise ConfigError("blockade_sites must be >= 0")
        for arr in (hop, inter, gam):
            arr.setflags(write=False)
        object.__setattr__(self, "hopping", hop)
        object.__setattr__(self, "interaction", inter)
        object.__setattr__(self, "gamma_site", gam)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "pump", float(self.pump))
        object.__setattr__(self, "gamma_out", float(self.gamma_out))
        object.__setattr__(self, "blockade_sites", int(self.blockade_sites))
        object.__setattr__(self, "j1", complex(self.j1))

    @property
    def n_sites(self) -> int:
        return self.gamma_site.shape[0]

    @property
    def output_rate(self) -> float:
        """|J_1|, the prefactor of the output intensity."""
        return abs(self.j1)

    @classmethod
    def translation_invariant(cls, n_sites, hop_m, v_m, *, beta=0.0, pump=0.0, gamma=0.0,
                              gamma_out=0.0, blockade_sites=1, j1=None, provenance=None):
        """Build J_ij = hop_m[|i-j|-1] (J_ij = conj J_ji for i > j) and V_ij = v_m[|i-j|-1]."""
        hop_m = np.asarray(hop_m, dtype=np.complex128).reshape(-1)
        v_m = np.asarray(v_m, dtype=np.float64).reshape(-1)
        if n_sites > 1 and (hop_m.size < n_sites - 1 or v_m.size < n_sites - 1):
            raise DimensionError(f"need {n_sites - 1} hopping and interaction entries")
        hop = np.zeros((n_sites, n_sites), np.complex128)
        inter = np.zeros((n_sites, n_sites))
        for i in range(n_sites):
            for j in range(i + 1, n_sites):
                # J_ij = J_{i-j} with J_{-m} = conj(J_m)
                hop[i, j] = np.conj(hop_m[j - i - 1])
                hop[j, i] = hop_m[j - i - 1]
                inter[i, j] = inter[j, i] = v_m[j - i - 1]
        gam = np.broadcast_to(np.asarray(gamma, dtype=float), (n_sites,)).copy()
        if j1 is None:
            j1 = hop_m[0] if hop_m.size else 0.0
        return cls(hop, inter, beta, pump, gam, gamma_out, blockade_sites, j1, dict(provenance or {}))

    def with_changes(self, **changes) -> SpinModel:
        kwargs = {name: getattr(self, name) for name in self.__dataclass_fields__}
        kwargs.update(changes)
        return SpinModel(**kwargs)

    # serialization: floats go through repr in json, so the round trip is exact
    def to_dict(self) -> dict:
        def cplx(a):
            return [[float(z.real), float(z.imag)] for z in np.asarray(a).reshape(-1)]

        return {
            "n_sites": self.n_sites,
            "hopping": cplx(self.hopping),
            "interaction": [float(x) for x in self.interaction.reshape(-1)],
            "beta": self.beta,
            "pump": self.pump,
            "gamma_site": [float(x) for x in self.gamma_site],
            "gamma_out": self.gamma_out,
            "blockade_sites": self.blockade_sites,
            "j1": [self.j1.real, self.j1.imag],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> SpinModel:
        n = int(d["n_sites"])
        hop = np.array([complex(re, im) for re, im in d["hopping"]], dtype=np.complex128).reshape(n, n)
        inter = np.array(d["interaction"], dtype=np.float64).reshape(n, n)
        return cls(
            hop, inter, d["beta"], d["pump"], np.array(d["gamma_site"], dtype=np.float64),
            d["gamma_out"], d["blockade_sites"], complex(*d["j1"]), d.get("provenance", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> SpinModel:
        return cls.from_dict(json.loads(text))

    def save(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> SpinModel:
        return cls.from_json(Path(path).read_text())

    def same_as(self, other: SpinModel) -> bool:
        """Bit-exact equality of all numeric fields."""
        return (
            np.array_equal(self.hopping, other.hopping)
            and np.array_equal(self.interaction, other.interaction)
            and np.array_equal(self.gamma_site, other.gamma_site)
            and (self.beta, self.pump, self.gamma_out, self.blockade_sites, self.j1)
            == (other.beta, other.pump, other.gamma_out, other.blockade_sites, other.j1)
        )


def blockade_radii(cfg: PhysicalConfig, j1) -> tuple[float, float]:
    """Return ``(r_tilde_b, r_b)``: ``(C6/|J1|)^(1/6)`` and ``(C6 |Delta| / Omega^2)^(1/6)``."""
    if cfg.c6 < 0:
        raise UnsupportedInteractionError("attractive interactions (c6 < 0) are not supported", keys=["c6"])
    if cfg.c6 == 0:
        return 0.0, 0.0
    if j1 == 0 or cfg.omega_ctrl <= 0:
        raise ConfigError("blockade radii need J1 != 0 and omega_ctrl > 0", keys=["omega_ctrl"])
    r_tilde = (cfg.c6 / abs(j1)) ** (1.0 / 6.0)
    r_b = (cfg.c6 * abs(cfg.detuning) / cfg.omega_ctrl**2) ** (1.0 / 6.0)
    if r_b <= r_tilde:
        warnings.warn(
            f"r_b = {r_b:.4g} um does not exceed r_tilde_b = {r_tilde:.4g} um; "
            "the regularised interaction is outside its intended regime",
            ValidityWarning,
            stacklevel=2,
        )
    return r_tilde, r_b


def blockade_window(r_b: float, a: float, c6: float = 1.0) -> int:
    """Site-granular blockade window: round(r_b / a), at least 1 when interacting."""
    if c6 == 0:
        return 0
    return max(1, int(round(r_b / a)))


def _pair_kernel(r_b):
    r6 = r_b**6

    def kern(dz):
        return 1.0 / (r6 + dz**6)

    return kern


def _density_on_nodes(wb, nodes):
    """|w_0(z)|^2 summed over components on arbitrary points (interpolated from samples)."""
    return wb.density(nodes)


def interaction_profile(wb, r_b: float, c6: float, n_sites: int, quad_order: int = 32,
                        tail_cells: int = 5):
    """V_m for m = 0..n_sites-1 by tensor-product Gauss-Legendre quadrature per cell pair.

    Translation invariance gives V_ij = V_{|i-j|}; the site-0 density is integrated
    over ``2 * tail_cells + 1`` cells around its centre, never more than one
    supercell (the Fourier-series Wannier function repeats every K cells).
    """
    a = wb.a
    tail_cells = max(0, min(int(tail_cells), (wb.n_cells - 1) // 2))
    x, w = np.polynomial.legendre.leggauss(quad_order)
    cells = np.arange(-tail_cells, tail_cells + 1)
    # nodes of every cell, z measured from the site centre
    z = (cells[:, None] + 0.5 * (x[None, :] + 1.0) - 0.5) * a
    wz = np.broadcast_to(0.5 * a * w, z.shape)
    rho = _density_on_nodes(wb, z.reshape(-1)).reshape(z.shape) * wz
    zf = z.reshape(-1)
    rf = rho.reshape(-1)
    kern = _pair_kernel(r_b)
    out = np.empty(n_sites)
    for m in range(n_sites):
        dz = zf[:, None] - (zf[None, :] + m * a)
        out[m] = 0.5 * c6 * rf @ kern(dz) @ rf
    return out


def interaction_matrix(wb, r_b: float, cfg: PhysicalConfig, *, check_order=True):
    """Regularised van der Waals matrix V_ij (zero diagonal).

    A second evaluation at doubled quadrature order estimates the error; a
    relative change above 1e-4 emits :class:`NumericalWarning`.
    """
    n = cfg.n_sites
    if cfg.c6 == 0:
        return np.zeros((n, n))
    prof = interaction_profile(wb, r_b, cfg.c6, n, cfg.quad_order, cfg.tail_cells)
    if check_order:
        fine = interaction_profile(wb, r_b, cfg.c6, n, 2 * cfg.quad_order, cfg.tail_cells)
        scale = np.abs(fine).max()
        change = float(np.max(np.abs(fine - prof)) / scale) if scale > 0 else 0.0
        if change > 1e-4:
            warnings.warn(
                f"interaction quadrature changed by {change:.2e} (relative) on order doubling",
                NumericalWarning,
                stacklevel=2,
            )
    idx = np.arange(n)
    v = prof[np.abs(idx[:, None] - idx[None, :])]
    np.fill_diagonal(v, 0.0)
    return v


def effective_decay(wb, cfg: PhysicalConfig) -> np.ndarray:
    """gamma_i = gamma_r times the Rydberg weight of the Wannier function (uniform in i)."""
    return np.full(cfg.n_sites, cfg.gamma_r * wb.rydberg_weight)


def assemble_spin_model(cfg: PhysicalConfig, wb, v, gamma, *, r_b=None, lower_band_energy=None):
    """Collect hopping, interaction, drive and decay into a :class:`SpinModel`.

    ``lower_band_energy`` (mean energy of the neglected band measured from the
    driven band) enables the band-neglect check |J1 / (2 eps - beta)| < 0.1.
    """
    n = cfg.n_sites
    v = np.asarray(v, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if v.shape != (n, n) or gamma.shape != (n,):
        raise DimensionError(f"interaction {v.shape} / decay {gamma.shape} do not match n_sites={n}")
    hop_m = np.asarray(wb.hoppings)
    if n > 1 and hop_m.size < n - 1:
        raise DimensionError(f"Wannier band carries {hop_m.size} hoppings, need {n - 1}")
    j1 = complex(hop_m[0]) if hop_m.size else 0.0
    # J_m from K k-points repeats with period K; beyond K//2 it is an image of J_{K-m}
    m_max = (hop_m.size + 1) // 2
    if n - 1 > m_max:
        warnings.warn(
            f"k grid of {hop_m.size + 1} points resolves hoppings up to m = {m_max}; "
            f"longer ones in this {n}-site chain are set to zero (use k_points >= 2 n_sites)",
            ValidityWarning,
            stacklevel=2,
        )
    hop = np.zeros((n, n), np.complex128)
    for i in range(n):
        for j in range(i + 1, min(n, i + m_max + 1)):
            hop[j, i] = hop_m[j - i - 1]
            hop[i, j] = np.conj(hop_m[j - i - 1])
    gamma_out = abs(j1) if cfg.gamma_out == EQUAL_J1 else float(cfg.gamma_out)
    if r_b is None:
        r_b = blockade_radii(cfg, j1)[1] if cfg.c6 > 0 else 0.0
    window = blockade_window(r_b, cfg.a, cfg.c6)
    if lower_band_energy is not None:
        denom = 2.0 * lower_band_energy - cfg.beta
        ratio = abs(j1 / denom) if denom != 0 else math.inf
        if ratio >= 0.1:
            warnings.warn(
                f"lower band not negligible: |J1/(2 eps - beta)| = {ratio:.3g} >= 0.1",
                ValidityWarning,
                stacklevel=2,
            )
    provenance = {
        "config_hash": cfg.config_hash(),
        "pw_cutoff": cfg.pw_cutoff,
        "k_points": cfg.k_points,
        "quad_order": cfg.quad_order,
        "tail_cells": cfg.tail_cells,
        "r_b": float(r_b),
    }
    return SpinModel(hop, v, cfg.beta, cfg.pump, gamma, gamma_out, window, j1, provenance)
