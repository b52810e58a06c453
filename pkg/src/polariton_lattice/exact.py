"""Reference dynamics for small lattices.

Deterministic master-equation integration (fixed-step RK4 on the density
matrix), first-order quantum trajectories, steady states and the exact
two-time correlation g2(tau).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import ConvergenceError, DimensionError, NumericalWarning, StepSizeError, UndefinedCorrelationError
from .lattice import SpinModel
from .observables import ObservableSeries, g2_normalize, output_intensity
from .operators import (
    CompiledModel,
    JumpSet,
    compile_model,
    liouvillian_apply,
    liouvillian_sparse,
    lower_site,
    occupations,
    vacuum_density,
    vacuum_state,
)

TRACE_DRIFT_LIMIT = 1e-6
JUMP_TIME_RTOL = 1e-10


def max_rate(model: SpinModel, jumps: JumpSet) -> float:
    """Largest of |J1|, P and the decay rates; sets the default step."""
    rates = [abs(model.j1), model.pump] + [jp.rate for jp in jumps]
    top = max(rates)
    if top <= 0:
        top = max(1.0, np.abs(model.interaction).max(), abs(model.beta))
    return float(top)


def default_dt(model: SpinModel, jumps: JumpSet, compiled: CompiledModel | None = None, *, density=True):
    """``1e-3 / max_rate``, capped so RK4 stays inside its stability region.

    The cap uses a Gershgorin bound on H_eff; the density-matrix generator has
    twice the spectral radius of the pure-state one.
    """
    c = compiled or compile_model(model, jumps)
    dt = 1e-3 / max_rate(model, jumps)
    bound = c.spectral_bound() * (2.0 if density else 1.0)
    if bound > 0:
        dt = min(dt, 2.5 / bound)
    return dt


def _check_grid(t_grid):
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be a strictly increasing 1-D array")
    return t_grid


def _substeps(span, dt):
    n = max(1, int(math.ceil(span / dt - 1e-9)))
    return n, span / n


def _density_observables(rho, model, occ):
    pops = np.real(np.diag(rho)) @ occ
    return pops


def integrate_me(model: SpinModel, jumps: JumpSet, rho0=None, t_grid=None, *, dt=None,
                 compiled: CompiledModel | None = None):
    """Integrate the master equation and record populations and I_out on ``t_grid``.

    Returns ``(series, rho_final)``.  Populations are recorded as Tr(n_i rho)
    without renormalising, so an unnormalised ``rho0`` is allowed.
    """
    n = model.n_sites
    if n > 8:
        raise DimensionError(f"density-matrix integration is limited to N <= 8 (got {n})")
    t_grid = _check_grid(t_grid)
    c = compiled or compile_model(model, jumps)
    rho = vacuum_density(n) if rho0 is None else np.array(rho0, dtype=np.complex128, copy=True)
    if rho.shape != (c.dim, c.dim):
        raise DimensionError(f"rho0 has shape {rho.shape}, expected {(c.dim, c.dim)}")
    dt = default_dt(model, jumps, c) if dt is None else float(dt)
    occ = occupations(n).astype(float)
    tr0 = np.trace(rho).real
    pops = np.empty((t_grid.size, n))
    pops[0] = _density_observables(rho, model, occ)
    max_drift = 0.0
    for k in range(1, t_grid.size):
        steps, h = _substeps(t_grid[k] - t_grid[k - 1], dt)
        kernels.rk4_density(rho, steps, h, c.heff_diag, c.src, c.dst, c.amp, c.rates)
        drift = abs(np.trace(rho).real - tr0) / max(abs(tr0), 1e-300)
        max_drift = max(max_drift, drift)
        # RK4 keeps the trace exactly, so an unstable step shows up as growth instead:
        # no entry of a positive matrix exceeds its trace
        blown = not np.all(np.isfinite(rho)) or np.abs(rho).max() > abs(tr0) * (1 + TRACE_DRIFT_LIMIT)
        if drift > TRACE_DRIFT_LIMIT or blown:
            raise StepSizeError(
                f"trace drift {drift:.2e} or unbounded growth at t={t_grid[k]:.6g}; "
                f"reduce dt (currently {dt:.3g})"
            )
        pops[k] = _density_observables(rho, model, occ)
    series = {f"pop_{i + 1}": pops[:, i] for i in range(n)}
    series["i_out"] = model.output_rate * pops[:, n - 1]
    out = ObservableSeries(t_grid, series, meta={"dt": dt, "max_trace_drift": max_drift})
    return out, rho


def trace_norm_hermitian(mat) -> float:
    mat = np.asarray(mat)
    return float(np.abs(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))).sum())


@dataclass
class SteadyState:
    rho: np.ndarray
    residual: float
    method: str
    t_integrated: float = 0.0

    def population(self, site):
        return float(np.real(np.diag(self.rho)) @ occupations(int(round(np.log2(self.rho.shape[0]))))[:, site])


def steady_state(model: SpinModel, jumps: JumpSet, *, tol=1e-8, t_max=None, dt=None) -> SteadyState:
    """Steady state certified by ``||L[rho]||_1 < tol``.

    A sparse direct solve of ``L vec(rho) = 0`` with the trace fixed is tried
    first; if its residual misses ``tol`` the state is relaxed further by
    integration up to ``t_max`` (default ``1e4 / max_rate``).
    """
    n = model.n_sites
    if n > 6:
        raise DimensionError(f"steady_state supports N <= 6 (got {n})")
    c = compile_model(model, jumps)
    dim = c.dim
    sup = liouvillian_sparse(model, jumps, c).tolil()
    trace_row = np.zeros(dim * dim, np.complex128)
    trace_row[np.arange(dim) * (dim + 1)] = 1.0
    sup[0, :] = trace_row
    rhs = np.zeros(dim * dim, np.complex128)
    rhs[0] = 1.0
    rho = None
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            vec = spla.spsolve(sp.csc_matrix(sup), rhs)
            if np.all(np.isfinite(vec)):
                rho = vec.reshape(dim, dim)
        except (spla.MatrixRankWarning, RuntimeError):
            rho = None
    method = "direct"
    t_done = 0.0
    if rho is None:
        rho = vacuum_density(n)
        method = "integration"
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = trace_norm_hermitian(liouvillian_apply(model, jumps, rho, c))
    if residual >= tol:
        method = "direct+integration" if method == "direct" else method
        t_max = 1e4 / max_rate(model, jumps) if t_max is None else t_max
        dt = default_dt(model, jumps, c) if dt is None else dt
        chunk = 100 * dt
        while residual >= tol and t_done < t_max:
            steps, h = _substeps(chunk, dt)
            kernels.rk4_density(rho, steps, h, c.heff_diag, c.src, c.dst, c.amp, c.rates)
            t_done += chunk
            rho = 0.5 * (rho + rho.conj().T)
            rho /= np.trace(rho).real
            residual = trace_norm_hermitian(liouvillian_apply(model, jumps, rho, c))
        if residual >= tol:
            raise ConvergenceError(
                f"steady state not reached by t={t_done:.4g}: residual {residual:.3e}", residual
            )
    return SteadyState(rho, residual, method, t_done)


def g2_exact(model: SpinModel, jumps: JumpSet, tau_grid, *, ss: SteadyState | None = None, dt=None):
    """Two-time correlation of the last site via the quantum regression theorem.

    rho' = sigma_N^- rho_ss sigma_N^+ is propagated without renormalisation and
    g2(tau) = Tr(n_N rho'(tau)) / <n_N>_ss^2.
    """
    tau_grid = _check_grid(tau_grid)
    ss = ss or steady_state(model, jumps)
    last = model.n_sites - 1
    n_ss = ss.population(last)
    if n_ss < 1e-12:
        raise UndefinedCorrelationError(f"steady-state population of the last site is {n_ss:.3e}")
    rho_p = lower_site(ss.rho, last)
    series, _ = integrate_me(model, jumps, rho_p, tau_grid, dt=dt)
    raw = series[f"pop_{last + 1}"]
    g2 = g2_normalize(raw, n_ss)
    return ObservableSeries(tau_grid, {"g2": g2}, time_label="tau",
                            meta={"n_ss": n_ss, "i_out_ss": output_intensity(n_ss, model.j1),
                                  "residual": ss.residual})


class _Kahan:
    """Compensated running sum over arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, x):
        y = x - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t


def trajectory_rng(seed: int, traj: int) -> np.random.Generator:
    """Counter-based stream for trajectory ``traj``: Philox keyed by (seed, traj)."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(traj)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _run_trajectory(psi0, t_grid, c, channels, occ, rng, dt, counts):
    psi = np.array(psi0, dtype=np.complex128, copy=True)
    psi /= np.linalg.norm(psi)
    n_rec = np.empty((t_grid.size, occ.shape[1]))
    w = np.abs(psi) ** 2
    n_rec[0] = (w / w.sum()) @ occ
    r = max(rng.random(), 1e-300)
    site_of = np.array([ch[0] for ch in channels], dtype=np.int64)
    rate_of = np.array([ch[1] for ch in channels])
    for k in range(1, t_grid.size):
        t, target = t_grid[k - 1], t_grid[k]
        while True:
            elapsed, crossed = kernels.evolve_until(
                psi, target - t, dt, r, JUMP_TIME_RTOL, c.heff_diag, c.src, c.dst, c.amp
            )
            norm2 = np.vdot(psi, psi).real
            if not norm2 <= 1.0 + 1e-6:
                # H_eff dynamics can only shrink the norm
                raise StepSizeError(f"trajectory norm grew to {norm2:.3g}; dt={dt:g} is unstable")
            if not crossed:
                if norm2 < 1e-250:
                    r /= norm2
                    psi /= math.sqrt(norm2)
                    counts["renormalizations"] += 1
                break
            t += elapsed
            # channel probability ~ ||c_j psi||^2 = rate_j * <n_site>
            w = np.abs(psi) ** 2
            weights = rate_of * (w @ occ)[site_of]
            cum = np.cumsum(weights)
            if cum[-1] <= 0:
                # no decay path left; keep evolving without a jump
                psi /= math.sqrt(norm2)
                r = max(rng.random(), 1e-300)
                continue
            pick = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
            pick = min(pick, len(channels) - 1)
            psi[:] = lower_site(psi, int(site_of[pick]))
            psi /= np.linalg.norm(psi)
            counts[channels[pick][2]] += 1
            r = max(rng.random(), 1e-300)
            if target - t <= 1e-14 * max(abs(target), 1.0):
                break
        w = np.abs(psi) ** 2
        n_rec[k] = (w / w.sum()) @ occ
    return n_rec


def wfmc_run(model: SpinModel, jumps: JumpSet, psi0=None, t_grid=None, n_traj=500, seed=0, *, dt=None):
    """Quantum-trajectory estimate of populations and I_out with standard errors.

    Each trajectory draws from its own Philox stream keyed by ``(seed, index)``,
    so results are bit-reproducible for fixed ``(seed, n_traj, t_grid)``.
    """
    n = model.n_sites
    if n > 12:
        raise DimensionError(f"trajectory engine supports N <= 12 (got {n})")
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    t_grid = _check_grid(t_grid)
    c = compile_model(model, jumps)
    psi0 = vacuum_state(n) if psi0 is None else np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (c.dim,):
        raise DimensionError(f"psi0 has shape {psi0.shape}, expected {(c.dim,)}")
    dt = default_dt(model, jumps, c, density=False) if dt is None else float(dt)
    channels = [(jp.site, jp.rate, jp.kind) for jp in jumps if jp.rate > 0]
    occ = occupations(n).astype(float)
    counts = {kind: 0 for kind in ("rydberg_decay", "output_left", "output_right", "renormalizations")}
    shape = (t_grid.size, n)
    acc, acc2 = _Kahan(shape), _Kahan(shape)
    for traj in range(n_traj):
        rng = trajectory_rng(seed, traj)
        pops = _run_trajectory(psi0, t_grid, c, channels, occ, rng, dt, counts)
        acc.add(pops)
        acc2.add(pops * pops)
    mean = acc.total / n_traj
    if n_traj > 1:
        var = np.maximum(acc2.total / n_traj - mean**2, 0.0) * n_traj / (n_traj - 1)
        err = np.sqrt(var / n_traj)
    else:
        err = np.zeros_like(mean)
    if counts["renormalizations"]:
        warnings.warn(f"{counts['renormalizations']} norm underflows renormalised", NumericalWarning,
                      stacklevel=2)
    series = {f"pop_{i + 1}": mean[:, i] for i in range(n)}
    series["i_out"] = model.output_rate * mean[:, n - 1]
    stderr = {f"pop_{i + 1}": err[:, i] for i in range(n)}
    stderr["i_out"] = model.output_rate * err[:, n - 1]
    return ObservableSeries(t_grid, series, stderr, meta={"dt": dt, "n_traj": n_traj, "seed": seed,
                                                          "jump_counts": counts})
