"""Many-body operators for the hard-core spin model.

States live in the 2^N occupation basis; basis index bit ``i`` is the
occupation of site ``i`` (site 0 is the least significant bit, and is the
pumped site).  Convention: |0> ground, |1> excited, sigma^+ = |1><0|.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import DimensionError
from .lattice import SpinModel

JUMP_KINDS = ("rydberg_decay", "output_left", "output_right")


@dataclass(frozen=True)
class Jump:
    site: int
    rate: float
    kind: str


@dataclass(frozen=True)
class JumpSet:
    """Collapse channels ``sqrt(rate) sigma^-_site``."""

    n_sites: int
    jumps: tuple

    def __post_init__(self):
        for jp in self.jumps:
            if jp.kind not in JUMP_KINDS:
                raise ValueError(f"unknown jump kind {jp.kind!r}")
            if not jp.rate >= 0:
                raise ValueError(f"negative jump rate at site {jp.site}")
            if not 0 <= jp.site < self.n_sites:
                raise DimensionError(f"jump site {jp.site} outside 0..{self.n_sites - 1}")
            if jp.kind == "output_left" and jp.site != 0:
                raise ValueError("output_left must act on site 0")
            if jp.kind == "output_right" and jp.site != self.n_sites - 1:
                raise ValueError("output_right must act on the last site")

    @classmethod
    def from_model(cls, model: SpinModel, *, left_output=True, right_output=True) -> JumpSet:
        n = model.n_sites
        jumps = [Jump(i, float(g), "rydberg_decay") for i, g in enumerate(model.gamma_site)]
        if left_output:
            jumps.append(Jump(0, model.gamma_out, "output_left"))
        if right_output:
            jumps.append(Jump(n - 1, model.gamma_out, "output_right"))
        return cls(n, tuple(jumps))

    def site_rates(self) -> np.ndarray:
        """Total sigma^- decay rate per site (channels on one site add up)."""
        rates = np.zeros(self.n_sites)
        for jp in self.jumps:
            rates[jp.site] += jp.rate
        return rates

    def __len__(self):
        return len(self.jumps)

    def __iter__(self):
        return iter(self.jumps)


@lru_cache(maxsize=16)
def occupations(n_sites: int) -> np.ndarray:
    """Boolean table ``occ[s, i]``: is site ``i`` excited in basis state ``s``."""
    s = np.arange(2**n_sites)
    occ = ((s[:, None] >> np.arange(n_sites)[None, :]) & 1).astype(bool)
    occ.setflags(write=False)
    return occ


@dataclass(frozen=True, eq=False)
class CompiledModel:
    """Hop table and diagonals ready for the kernels."""

    n_sites: int
    diag: np.ndarray  # real diagonal of H
    src: np.ndarray
    dst: np.ndarray
    amp: np.ndarray
    rates: np.ndarray  # per-site sigma^- rate
    heff_diag: np.ndarray  # diag - (i/2) sum_i rate_i n_i

    @property
    def dim(self):
        return 2**self.n_sites

    def spectral_bound(self) -> float:
        """Gershgorin bound on |eigenvalues| of H_eff."""
        row = np.abs(self.heff_diag).copy()
        np.add.at(row, self.dst, np.abs(self.amp))
        return float(row.max()) if row.size else 0.0


def compile_model(model: SpinModel, jumps: JumpSet | None = None) -> CompiledModel:
    n = model.n_sites
    if jumps is not None and jumps.n_sites != n:
        raise DimensionError(f"jump set is for {jumps.n_sites} sites, model has {n}")
    occ = occupations(n)
    nf = occ.astype(float)
    states = np.arange(2**n)
    diag = model.beta * nf.sum(axis=1) + np.einsum("si,ij,sj->s", nf, model.interaction, nf)
    src, dst, amp = [], [], []
    for i in range(n):
        for j in range(n):
            if i == j or model.hopping[i, j] == 0:
                continue
            # -J_ij sigma_i^+ sigma_j^- : bit j set, bit i clear
            sel = states[occ[:, j] & ~occ[:, i]]
            src.append(sel)
            dst.append(sel ^ (1 << i) ^ (1 << j))
            amp.append(np.full(sel.size, -model.hopping[i, j]))
    if model.pump != 0:
        src.append(states)
        dst.append(states ^ 1)
        amp.append(np.full(states.size, model.pump, dtype=np.complex128))
    if src:
        src_a = np.concatenate(src).astype(np.int64)
        dst_a = np.concatenate(dst).astype(np.int64)
        amp_a = np.concatenate(amp).astype(np.complex128)
        order = np.lexsort((src_a, dst_a))
        src_a, dst_a, amp_a = src_a[order], dst_a[order], amp_a[order]
    else:
        src_a = np.zeros(0, np.int64)
        dst_a = np.zeros(0, np.int64)
        amp_a = np.zeros(0, np.complex128)
    rates = jumps.site_rates() if jumps is not None else np.zeros(n)
    heff = diag - 0.5j * (nf @ rates)
    return CompiledModel(n, diag, src_a, dst_a, amp_a, rates, heff.astype(np.complex128))


def _check_dim(model: SpinModel, dim: int):
    if dim != 2**model.n_sites:
        raise DimensionError(f"state dimension {dim} does not match 2^{model.n_sites}")


def hamiltonian_apply(model: SpinModel, psi, compiled: CompiledModel | None = None):
    """Matrix-free ``H psi``."""
    psi = np.asarray(psi, dtype=np.complex128)
    _check_dim(model, psi.shape[0])
    c = compiled or compile_model(model)
    return kernels.heff_apply(psi, c.diag.astype(np.complex128), c.src, c.dst, c.amp)


def liouvillian_apply(model: SpinModel, jumps: JumpSet, rho, compiled: CompiledModel | None = None):
    """Matrix-free Lindblad generator acting on a Hermitian density matrix."""
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError(f"density matrix must be square, got {rho.shape}")
    _check_dim(model, rho.shape[0])
    c = compiled or compile_model(model, jumps)
    return kernels.lindblad_rhs(rho, c.heff_diag, c.src, c.dst, c.amp, c.rates)


def hamiltonian_sparse(model: SpinModel, compiled: CompiledModel | None = None, *, effective=False):
    c = compiled or compile_model(model)
    d = c.heff_diag if effective else c.diag.astype(np.complex128)
    h = sp.coo_matrix((c.amp, (c.dst, c.src)), shape=(c.dim, c.dim)).tocsr()
    return (h + sp.diags(d)).tocsr()


def liouvillian_sparse(model: SpinModel, jumps: JumpSet, compiled: CompiledModel | None = None):
    """Superoperator on row-major ``vec(rho)``: vec(A rho B) = (A kron B^T) vec(rho)."""
    c = compiled or compile_model(model, jumps)
    heff = hamiltonian_sparse(model, c, effective=True)
    eye = sp.identity(c.dim, dtype=np.complex128, format="csr")
    sup = -1j * sp.kron(heff, eye) + 1j * sp.kron(eye, heff.conj())
    states = np.arange(c.dim)
    for site, rate in enumerate(c.rates):
        if rate == 0:
            continue
        m = 1 << site
        low = states[(states & m) == 0]
        lower = sp.coo_matrix((np.ones(low.size), (low, low | m)), shape=(c.dim, c.dim)).tocsr()
        sup = sup + rate * sp.kron(lower, lower)
    return sup.tocsr()


def vacuum_state(n_sites: int):
    psi = np.zeros(2**n_sites, np.complex128)
    psi[0] = 1.0
    return psi


def vacuum_density(n_sites: int):
    rho = np.zeros((2**n_sites, 2**n_sites), np.complex128)
    rho[0, 0] = 1.0
    return rho


def lower_site(state, site: int):
    """Apply sigma^-_site to a pure state or as sigma^- rho sigma^+ to a density matrix."""
    state = np.asarray(state, dtype=np.complex128)
    dim = state.shape[0]
    m = 1 << site
    states = np.arange(dim)
    low = states[(states & m) == 0]
    out = np.zeros_like(state)
    if state.ndim == 1:
        out[low] = state[low | m]
    else:
        out[np.ix_(low, low)] = state[np.ix_(low | m, low | m)]
    return out


def state_weights(state) -> np.ndarray:
    """Basis-state probabilities of a pure state (normalised) or density matrix."""
    state = np.asarray(state)
    if state.ndim == 1:
        w = np.abs(state) ** 2
        return w / w.sum()
    return np.real(np.diag(state))


def populations(state, n_sites: int) -> np.ndarray:
    return state_weights(state) @ occupations(n_sites)


_NAME = re.compile(r"^\s*(\w+)\s*(?:\(\s*(-?\d+)\s*\))?\s*$")


def expectation(state, observable, model: SpinModel | None = None) -> float:
    """Expectation of a named observable.

    ``observable`` is ``"population(i)"``, ``"output_intensity"`` or
    ``"blockade_window_sum(i)"`` (0-based site ``i``), or an equivalent tuple
    ``(name, i)``.  The last two need ``model`` for |J1| and the window size.
    """
    if isinstance(observable, tuple):
        name, arg = observable[0], (observable[1] if len(observable) > 1 else None)
    else:
        match = _NAME.match(str(observable))
        if not match:
            raise KeyError(f"unknown observable {observable!r}")
        name, arg = match.group(1), match.group(2)
    state = np.asarray(state)
    dim = state.shape[0]
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise DimensionError(f"state dimension {dim} is not a power of two")
    if model is not None:
        _check_dim(model, dim)
    pops = populations(state, n)
    if name == "population" and arg is not None:
        i = int(arg)
        if not 0 <= i < n:
            raise DimensionError(f"site {i} outside 0..{n - 1}")
        return float(pops[i])
    if name == "output_intensity" and arg is None:
        if model is None:
            raise ValueError("output_intensity needs the model (for |J1|)")
        return float(model.output_rate * pops[n - 1])
    if name == "blockade_window_sum" and arg is not None:
        if model is None:
            raise ValueError("blockade_window_sum needs the model (for the window size)")
        i = int(arg)
        b = max(model.blockade_sites, 1)
        lo, hi = max(0, i - b + 1), min(n, i + b)
        return float(pops[lo:hi].sum())
    raise KeyError(f"unknown observable {observable!r}")
