"""Single-polariton band structure of the four-component light-matter model.

Basis of the Bloch matrix: index ``4 p + c`` with plane wave ``G_p = 2 pi (p - M) / a``
and component ``c`` in (forward photon, backward photon, intermediate e,
Rydberg r).  Energies are complex (the e level carries -i gamma_e).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import SPEED_OF_LIGHT, PhysicalConfig
from .errors import ConfigError, EigensolverError, GaugeError, LabellingError, NumericalWarning

PHOTON_FWD, PHOTON_BWD, EXCITED, RYDBERG = range(4)
COMPONENTS = ("photon_fwd", "photon_bwd", "e", "r")
DARK_UPPER, DARK_LOWER, BRIGHT, OTHER = "dark_upper", "dark_lower", "bright", "other"
GAUGE_FLOOR = 1e-8


def coupling_constant(cfg: PhysicalConfig) -> float:
    """g_tilde = sqrt(6 pi gamma_e c^3 / omega_ge^2), in um^(3/2)/us."""
    return math.sqrt(6.0 * math.pi * cfg.gamma_e * SPEED_OF_LIGHT**3 / cfg.omega_ge**2)


def density_profile(cfg: PhysicalConfig, z) -> np.ndarray:
    """Periodic Gaussian density with mean ``n0``, summed via its Fourier series."""
    if not cfg.sigma_density > 0:
        raise ConfigError("sigma_density must be > 0", keys=["sigma_density"])
    z = np.asarray(z, dtype=float)
    q = 2.0 * math.pi * cfg.sigma_density / cfg.a
    n_max = max(1, int(math.ceil(math.sqrt(2.0 * 40.0 * math.log(10.0)) / q)))
    orders = np.arange(1, n_max + 1)
    amps = np.exp(-0.5 * (q * orders) ** 2)
    phase = 2.0 * math.pi / cfg.a * np.multiply.outer(z, orders)
    return cfg.n0 * (1.0 + 2.0 * np.cos(phase) @ amps)


def coupling_fourier(cfg: PhysicalConfig, n_samples: int | None = None) -> np.ndarray:
    """Fourier coefficients ``g_G`` of g(z) = g_tilde sqrt(n(z)) for G = 2 pi n / a, n = -2M..2M.

    Entry ``n + 2M`` holds order ``n``.
    """
    if not cfg.sigma_density > 0:
        raise ConfigError("sigma_density must be > 0", keys=["sigma_density"])
    m = cfg.pw_cutoff
    n_z = n_samples or max(8192, 16 * (4 * m + 1))
    z = np.arange(n_z) * (cfg.a / n_z)
    dens = np.clip(density_profile(cfg, z), 0.0, None)
    g = coupling_constant(cfg) * np.sqrt(dens)
    coeff = np.fft.fft(g) / n_z
    orders = np.arange(-2 * m, 2 * m + 1)
    return coeff[orders % n_z]


def bloch_hamiltonian(cfg: PhysicalConfig, k: float, g_fourier: np.ndarray | None = None) -> np.ndarray:
    """Complex Bloch matrix of dimension 4(2M+1) at wavenumber ``k``."""
    if abs(k) > math.pi / cfg.a * (1 + 1e-12):
        raise ValueError(f"k = {k} lies outside the first Brillouin zone")
    m = cfg.pw_cutoff
    p = 2 * m + 1
    gf = coupling_fourier(cfg) if g_fourier is None else g_fourier
    gvec = 2.0 * math.pi * np.arange(-m, m + 1) / cfg.a
    h = np.zeros((4 * p, 4 * p), dtype=np.complex128)
    base = 4 * np.arange(p)
    h[base + PHOTON_FWD, base + PHOTON_FWD] = SPEED_OF_LIGHT * (k + gvec)
    h[base + PHOTON_BWD, base + PHOTON_BWD] = -SPEED_OF_LIGHT * (k + gvec)
    h[base + EXCITED, base + EXCITED] = cfg.detuning
    h[base + RYDBERG, base + RYDBERG] = cfg.delta2
    h[base + EXCITED, base + RYDBERG] = cfg.omega_ctrl
    h[base + RYDBERG, base + EXCITED] = cfg.omega_ctrl
    # g_{G_p - G_q} couples e at p with both photon fields at q
    cmat = gf[(np.arange(p)[:, None] - np.arange(p)[None, :]) + 2 * m]
    for photon in (PHOTON_FWD, PHOTON_BWD):
        h[np.ix_(base + EXCITED, base + photon)] = cmat
        h[np.ix_(base + photon, base + EXCITED)] = cmat.conj().T
    return h


def matter_window(cfg: PhysicalConfig) -> float:
    """Energy scale of the atomic levels, 2 (|Delta| + Omega + |delta2|).

    Dark polaritons live well inside it; far-detuned photon branches (which
    also have tiny e-weight) lie outside.
    """
    return 2.0 * (abs(cfg.detuning) + cfg.omega_ctrl + abs(cfg.delta2))


def k_grid(cfg: PhysicalConfig) -> np.ndarray:
    kp = cfg.k_points
    m = np.arange(-(kp // 2), (kp + 1) // 2)
    return 2.0 * math.pi * m / (kp * cfg.a)


def component_weights(vecs: np.ndarray, comp: int) -> np.ndarray:
    """Weight of one component per eigenvector column (columns assumed unit-norm)."""
    return np.sum(np.abs(vecs[comp::4]) ** 2, axis=0)


def _align_degenerate(vals, vecs, prev, tol):
    """Rotate degenerate eigenvector groups towards the previous k's vectors."""
    d = vals.size
    order = np.argsort(vals.real)
    scale = max(1.0, float(np.abs(vals).max()))
    groups, cur = [], [order[0]]
    for a, b in zip(order[:-1], order[1:]):
        if abs(vals[b] - vals[a]) <= tol * scale:
            cur.append(b)
        else:
            groups.append(cur)
            cur = [b]
    groups.append(cur)
    out = vecs.copy()
    for grp in groups:
        if len(grp) < 2:
            continue
        q, _ = np.linalg.qr(vecs[:, grp])
        proj = q.conj().T @ prev  # (s, d)
        weight = np.sum(np.abs(proj) ** 2, axis=0)
        chosen = np.argsort(-weight)[: len(grp)]
        chosen.sort()
        new = q @ proj[:, chosen]
        # orthonormalise inside the subspace so columns stay independent
        new, _ = np.linalg.qr(new)
        phase = np.sum(new.conj() * prev[:, chosen], axis=0)
        # keep each column pointing along its partner
        fixed = np.where(np.abs(phase) > 0, phase / np.where(np.abs(phase) > 0, np.abs(phase), 1), 1)
        out[:, grp] = new * fixed[None, :]
    assert out.shape[1] == d
    return out


@dataclass
class BandStructure:
    """Eigenpairs on the k grid, columns ordered by tracked band index.

    ``labels[ik, b]`` tags band ``b`` at ``k_grid[ik]``.  The two dark branches
    are tracked by eigenvector overlap; ``dark_upper`` marks whichever of them
    is higher in energy at that k (so the tag can switch at the crossing).
    """

    k_grid: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    labels: np.ndarray
    e_weight: np.ndarray
    r_weight: np.ndarray
    cfg: PhysicalConfig
    dark_bands: tuple = ()
    notes: list = field(default_factory=list)

    @property
    def n_bands(self):
        return self.eigenvalues.shape[1]

    def band_of(self, label: str) -> np.ndarray:
        """Tracked band index carrying ``label`` at each k."""
        hits = self.labels == label
        if not np.all(hits.sum(axis=1) == 1):
            raise LabellingError(f"label {label!r} is not present exactly once at every k")
        return np.argmax(hits, axis=1)

    def energies(self, label: str) -> np.ndarray:
        idx = self.band_of(label)
        return self.eigenvalues[np.arange(len(self.k_grid)), idx]

    def bright_bands(self):
        mask = np.all(self.labels == BRIGHT, axis=0)
        return np.flatnonzero(mask)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "band_index", "label", "re_energy", "im_energy", "e_weight"])
            for ik, k in enumerate(self.k_grid):
                for b in range(self.n_bands):
                    e = self.eigenvalues[ik, b]
                    w.writerow([f"{k:.17g}", b, self.labels[ik, b], f"{e.real:.17g}", f"{e.imag:.17g}",
                                f"{self.e_weight[ik, b]:.17g}"])


def _diagonalize(cfg, k, gf):
    h = bloch_hamiltonian(cfg, k, gf)
    try:
        vals, vecs = np.linalg.eig(h)
    except np.linalg.LinAlgError as exc:
        raise EigensolverError(f"eigensolver failed at k={k:.6g}: {exc}", k) from None
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(vecs))):
        raise EigensolverError(f"non-finite eigenpairs at k={k:.6g}", k)
    vecs = vecs / np.linalg.norm(vecs, axis=0)
    return vals, vecs


def solve_bands(cfg: PhysicalConfig, *, require_dark=True, degeneracy_tol=1e-12) -> BandStructure:
    """Diagonalise on the k grid, track bands by overlap and label the dark pair.

    Dark candidates are tracked bands whose e-weight stays below
    ``cfg.dark_weight_tol`` and whose energy stays inside the matter window
    (see :func:`matter_window`) at every k; the two with smallest mean
    |Re eps| are the dark pair.  With ``require_dark`` a missing pair raises
    :class:`LabellingError`; otherwise no dark labels are assigned and the
    reason is stored in ``notes``.
    """
    ks = k_grid(cfg)
    gf = coupling_fourier(cfg)
    n_k = ks.size
    dim = 4 * (2 * cfg.pw_cutoff + 1)
    vals_t = np.empty((n_k, dim), np.complex128)
    vecs_t = np.empty((n_k, dim, dim), np.complex128)
    prev = None
    for ik, k in enumerate(ks):
        vals, vecs = _diagonalize(cfg, k, gf)
        if prev is not None:
            vecs = _align_degenerate(vals, vecs, prev, degeneracy_tol)
            overlap = np.abs(prev.conj().T @ vecs) ** 2
            _, col = linear_sum_assignment(-overlap)
            vals, vecs = vals[col], vecs[:, col]
        else:
            order = np.lexsort((vals.imag, vals.real))
            vals, vecs = vals[order], vecs[:, order]
        vals_t[ik] = vals
        vecs_t[ik] = vecs
        prev = vecs
    e_w = np.stack([component_weights(vecs_t[ik], EXCITED) for ik in range(n_k)])
    r_w = np.stack([component_weights(vecs_t[ik], RYDBERG) for ik in range(n_k)])

    labels = np.full((n_k, dim), OTHER, dtype=object)
    tol = cfg.dark_weight_tol
    bright = np.mean(e_w, axis=0) >= tol
    labels[:, bright] = BRIGHT
    notes = []
    dark = ()
    window = matter_window(cfg)
    near_zero = np.max(np.abs(vals_t.real), axis=0) <= window
    candidates = np.flatnonzero((np.max(e_w, axis=0) < tol) & near_zero)
    if cfg.omega_ctrl == 0:
        reason = "no control field: dark and bright polaritons are not distinguishable"
    elif candidates.size < 2:
        worst = np.sort(np.max(e_w[:, near_zero], axis=0))[:2]
        reason = (f"found {candidates.size} band(s) with e-weight < {tol} inside the matter window "
                  f"at every k (smallest e-weight maxima there: {np.array2string(worst, precision=3)})")
    else:
        reason = None
        mean_abs = np.mean(np.abs(vals_t[:, candidates].real), axis=0)
        dark = tuple(int(b) for b in candidates[np.argsort(mean_abs)[:2]])
        b0, b1 = dark
        upper0 = vals_t[:, b0].real >= vals_t[:, b1].real
        labels[:, b0] = np.where(upper0, DARK_UPPER, DARK_LOWER)
        labels[:, b1] = np.where(upper0, DARK_LOWER, DARK_UPPER)
    if reason is not None:
        if require_dark:
            raise LabellingError(reason)
        notes.append(reason)
    return BandStructure(ks, vals_t, vecs_t, labels, e_w, r_w, cfg, dark, notes)


def band_gap(bs: BandStructure) -> float:
    """min_k |Re eps_bright(k) - Re eps_dark_upper(k)| over all bright bands."""
    bright = bs.bright_bands()
    if bright.size == 0:
        raise LabellingError("band structure has no bright band")
    if not bs.dark_bands:
        raise LabellingError("band structure has no dark bands; " + "; ".join(bs.notes))
    upper = bs.energies(DARK_UPPER).real
    diffs = np.abs(bs.eigenvalues[:, bright].real - upper[:, None])
    return float(diffs.min())


@dataclass
class WannierBand:
    """Hoppings and the site-0 Wannier function of one band.

    ``hoppings[m - 1]`` is J_m for m = 1..K-1 (K = number of k points);
    ``samples`` holds the four components of w_0 on ``z`` covering the
    supercell of K cells centred on site 0.  Site j is w_0 shifted by j a.
    """

    band: str
    a: float
    k_grid: np.ndarray
    energies: np.ndarray
    site_energies: complex
    hoppings: np.ndarray
    z: np.ndarray
    samples: np.ndarray
    coefficients: np.ndarray  # (K, 4(2M+1)) gauge-fixed Bloch vectors
    pw_cutoff: int
    gauge_component: str
    rydberg_weight: float
    notes: list = field(default_factory=list)

    @property
    def n_cells(self):
        return self.k_grid.size

    def hoppings_upto(self, m_max: int) -> np.ndarray:
        return self.hoppings[:m_max]

    def site_samples(self, j: int) -> np.ndarray:
        per_cell = self.z.size // self.n_cells
        return np.roll(self.samples, j * per_cell, axis=0)

    def amplitudes(self, z) -> np.ndarray:
        """Evaluate the four components of w_0 at arbitrary ``z`` from its Fourier series."""
        z = np.asarray(z, dtype=float).reshape(-1)
        m = self.pw_cutoff
        gvec = 2.0 * math.pi * np.arange(-m, m + 1) / self.a
        norm = 1.0 / math.sqrt(self.n_cells * self.n_cells * self.a)
        out = np.zeros((z.size, 4), np.complex128)
        for ik, k in enumerate(self.k_grid):
            phase = np.exp(1j * np.multiply.outer(z, k + gvec))  # (nz, P)
            c = self.coefficients[ik].reshape(-1, 4)  # (P, 4)
            out += phase @ c
        return out * norm

    def density(self, z) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes(z)) ** 2, axis=1)

    def overlap_matrix(self) -> np.ndarray:
        """<w_0 | w_j> for j = 0..K-1 on the sample grid."""
        dz = self.z[1] - self.z[0]
        return np.array([np.sum(self.samples.conj() * self.site_samples(j)) * dz
                         for j in range(self.n_cells)])

    def reconstruct(self) -> np.ndarray:
        """Re eps(k) - Re eps_bar rebuilt from all hoppings: -sum_m J_m e^{-i k m a}."""
        m = np.arange(1, self.n_cells)
        return -np.real(np.exp(-1j * np.multiply.outer(self.k_grid, m) * self.a) @ self.hoppings)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "re_J", "im_J"])
            for m, j in enumerate(self.hoppings, start=1):
                w.writerow([m, f"{j.real:.17g}", f"{j.imag:.17g}"])


def _fix_gauge(vec, m):
    """Phase-rotate so the Rydberg (fallback: forward photon) G=0 amplitude is real positive."""
    for comp, name in ((RYDBERG, "r"), (PHOTON_FWD, "photon_fwd")):
        ref = vec[4 * m + comp]
        if abs(ref) >= GAUGE_FLOOR:
            return vec * (abs(ref) / ref), name
    raise GaugeError("gauge reference components vanish (|r_0|, |photon_0| < 1e-8)")


def wannier_transform(bs: BandStructure, band: str = DARK_UPPER, cfg: PhysicalConfig | None = None,
                      samples_per_cell: int | None = None) -> WannierBand:
    """Wannier function and hoppings J_m = -(1/K) sum_k e^{i k m a} (eps(k) - eps_bar).

    The hoppings use Re eps(k); the imaginary part of the dispersion is a decay
    handled separately through the effective site decay.
    """
    cfg = cfg or bs.cfg
    idx = bs.band_of(band)
    ks = bs.k_grid
    n_k = ks.size
    m = cfg.pw_cutoff
    energies = bs.eigenvalues[np.arange(n_k), idx]
    coeffs = np.empty((n_k, bs.eigenvectors.shape[1]), np.complex128)
    used = set()
    for ik in range(n_k):
        vec = bs.eigenvectors[ik, :, idx[ik]]
        vec = vec / np.linalg.norm(vec)
        coeffs[ik], name = _fix_gauge(vec, m)
        used.add(name)
    gauge = "r" if used == {"r"} else "mixed" if len(used) > 1 else used.pop()

    eps_bar = complex(np.mean(energies))
    shift = energies.real - eps_bar.real
    mm = np.arange(1, n_k)
    hop = -np.exp(1j * np.multiply.outer(mm, ks) * cfg.a) @ shift / n_k

    per_cell = samples_per_cell or 2 * (2 * m + 1)
    if per_cell < 2 * (2 * m + 1):
        raise ValueError("need at least 2(2M+1) samples per cell for exact normalisation")
    n_z = per_cell * n_k
    z = (np.arange(n_z) - n_z // 2) * (cfg.a / per_cell)
    wb = WannierBand(band, cfg.a, ks.copy(), energies, eps_bar, hop, z, np.zeros((n_z, 4), np.complex128),
                     coeffs, m, gauge, float(np.mean(np.sum(np.abs(coeffs[:, RYDBERG::4]) ** 2, axis=1))))
    wb.samples = wb.amplitudes(z)
    overlaps = wb.overlap_matrix()
    ortho = float(np.max(np.abs(overlaps - np.eye(1, n_k)[0])))
    if ortho > 1e-6:
        warnings.warn(f"Wannier orthonormality defect {ortho:.2e}", NumericalWarning, stacklevel=2)
    wb.notes.append(f"orthonormality defect {ortho:.3e}")
    return wb


def tail_weight(wb: WannierBand, tail_cells: int) -> float:
    """Norm of w_0 outside +-(tail_cells + 1/2) cells."""
    inside = np.abs(wb.z) < (tail_cells + 0.5) * wb.a
    dz = wb.z[1] - wb.z[0]
    return float(1.0 - np.sum(np.abs(wb.samples[inside]) ** 2) * dz)
