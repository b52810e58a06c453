"""Product-state dynamics with a blockade constraint.

Each site carries a Bloch vector alpha_i, rho_i = (1 + alpha_i . sigma) / 2 in
the (|0>, |1>) basis with sigma_z = diag(-1, 1), so alpha = (0, 0, -1) is the
empty site.  A time step of length tau updates the sites one after another;
site i minimises the size of its two-site implicit-midpoint defects against
every other site, with all other sites held fixed.

Three ways of combining the per-pair defects are available: ``"sum"`` adds
trace norms, ``"sumsq"`` adds squared trace norms and ``"hs"`` (default) adds
squared Hilbert-Schmidt norms.  Summed trace norms pin an empty site next to
empty partners (the shared difference term costs more in N-2 pairs than the
single driven pair can gain), so no excitation ever leaves the pumped site
for N >= 3; the quadratic ``"hs"`` form keeps the midpoint step smooth and
tracks the mean-field rate as tau -> 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConstraintError, UndefinedCorrelationError
from .lattice import SpinModel
from .observables import ObservableSeries, g2_normalize
from .operators import JumpSet

log = logging.getLogger(__name__)

SIGMA_PLUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)
SIGMA_MINUS = SIGMA_PLUS.T.copy()
NUMBER = SIGMA_PLUS @ SIGMA_MINUS
EYE2 = np.eye(2, dtype=np.complex128)
PAULI = np.array([
    EYE2,
    SIGMA_PLUS + SIGMA_MINUS,
    -1j * (SIGMA_PLUS - SIGMA_MINUS),
    np.diag([-1.0, 1.0]).astype(np.complex128),
])
VACUUM_ALPHA = np.array([0.0, 0.0, -1.0])
FEASIBILITY_SLACK = 1e-9

WEIGHTINGS = ("consistent", "literal")
AGGREGATES = ("sum", "sumsq", "hs")
INTERACTIONS = ("hard_sphere", "full")


def single_site_density(alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float)
    return 0.5 * (PAULI[0] + a[0] * PAULI[1] + a[1] * PAULI[2] + a[2] * PAULI[3])


@dataclass
class ProductState:
    """Bloch vectors ``alphas[i] = (a_x, a_y, a_z)`` of the product ansatz."""

    alphas: np.ndarray

    def __post_init__(self):
        self.alphas = np.array(self.alphas, dtype=float).reshape(-1, 3)

    @classmethod
    def vacuum(cls, n_sites: int) -> ProductState:
        return cls(np.tile(VACUUM_ALPHA, (n_sites, 1)))

    @property
    def n_sites(self):
        return self.alphas.shape[0]

    def populations(self) -> np.ndarray:
        return 0.5 * (1.0 + self.alphas[:, 2])

    def copy(self) -> ProductState:
        return ProductState(self.alphas.copy())

    def max_length(self) -> float:
        return float(np.linalg.norm(self.alphas, axis=1).max())

    def window_sums(self, blockade_sites: int) -> np.ndarray:
        """sum_{|j-i| < b} n_j for every i."""
        return window_sums(self.populations(), blockade_sites)

    def is_feasible(self, blockade_sites: int, slack: float = FEASIBILITY_SLACK) -> bool:
        if self.max_length() > 1.0 + slack:
            return False
        if blockade_sites < 1:
            return True
        return bool(np.all(self.window_sums(blockade_sites) <= 1.0 + slack))


def window_sums(n, blockade_sites):
    n = np.asarray(n, dtype=float)
    if blockade_sites < 1:
        return n.copy()
    kernel = np.ones(2 * blockade_sites - 1)
    return np.convolve(n, kernel, mode="same")


def population_cap(n, i: int, blockade_sites: int) -> float:
    """Largest n_i keeping every window that contains i at total <= 1."""
    if blockade_sites < 1:
        return 1.0
    n = np.asarray(n, dtype=float)
    sums = window_sums(n, blockade_sites)
    lo, hi = max(0, i - blockade_sites + 1), min(n.size, i + blockade_sites)
    cap = float(np.min(1.0 - (sums[lo:hi] - n[i])))
    if cap < -FEASIBILITY_SLACK:
        raise ConstraintError(f"blockade window around site {i} is overfull without it ({1 - cap:.6g})", i)
    return min(1.0, max(cap, 0.0))


# ------------------------------------------------------------------ generators


def _superop(h, collapse_ops):
    """16x16 superoperator of a two-site Lindbladian on row-major vec(rho)."""
    eye = np.eye(h.shape[0], dtype=np.complex128)
    s = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in collapse_ops:
        cdc = c.conj().T @ c
        s += np.kron(c, c.conj()) - 0.5 * (np.kron(cdc, eye) + np.kron(eye, cdc.T))
    return s


def _local_terms(model: SpinModel, rates: np.ndarray, i: int):
    h = model.beta * NUMBER
    if i == 0:
        h = h + model.pump * (SIGMA_PLUS + SIGMA_MINUS)
    return h, math.sqrt(rates[i]) * SIGMA_MINUS


def _pair_parts(model: SpinModel, rates, i, j, w_i, w_j, v_ij=None):
    """Hamiltonian and collapse operators of the two-site generator on (i, j)."""
    v_ij = model.interaction[i, j] if v_ij is None else v_ij
    hi, ci = _local_terms(model, rates, i)
    hj, cj = _local_terms(model, rates, j)
    a_i = lambda x: np.kron(x, EYE2)  # noqa: E731
    a_j = lambda x: np.kron(EYE2, x)  # noqa: E731
    h = (
        -model.hopping[i, j] * a_i(SIGMA_PLUS) @ a_j(SIGMA_MINUS)
        - model.hopping[j, i] * a_j(SIGMA_PLUS) @ a_i(SIGMA_MINUS)
        + 2.0 * v_ij * a_i(NUMBER) @ a_j(NUMBER)
        + w_i * a_i(hi)
        + w_j * a_j(hj)
    )
    collapse = [math.sqrt(w_i) * a_i(ci), math.sqrt(w_j) * a_j(cj)]
    return h, collapse


def pair_liouvillian_apply(model: SpinModel, jumps: JumpSet, i: int, j: int, rho_pair) -> np.ndarray:
    """Two-site generator L_ij on a 4x4 matrix ordered (site i) x (site j).

    Hopping and interaction between i and j enter in full; each site's local
    drive, detuning and decay enter with weight 1/(N-1), so summing over all
    partners j restores every local term exactly once.
    """
    if i == j:
        raise ValueError("pair generator needs two distinct sites")
    n = model.n_sites
    w = 1.0 / (n - 1)
    h, collapse = _pair_parts(model, jumps.site_rates(), i, j, w, w)
    rho = np.asarray(rho_pair, dtype=np.complex128)
    out = -1j * (h @ rho - rho @ h)
    for c in collapse:
        cd = c.conj().T
        out += c @ rho @ cd - 0.5 * (cd @ c @ rho + rho @ cd @ c)
    return out


def pair_interaction(model: SpinModel, i: int, j: int, interaction: str = "hard_sphere") -> float:
    """V_ij as seen by the product ansatz.

    With ``"hard_sphere"`` pairs inside the blockade window get no interaction
    energy: the window constraint already stands for their (vanishing) pair
    correlation, and a product state would otherwise charge them V_ij n_i n_j.
    """
    if interaction not in INTERACTIONS:
        raise ValueError(f"interaction must be one of {INTERACTIONS}")
    if interaction == "hard_sphere" and abs(i - j) < model.blockade_sites:
        return 0.0
    return float(model.interaction[i, j])


@dataclass
class PairOperators:
    """Precomputed residual superoperators K_ij for every ordered pair."""

    n_sites: int
    weighting: str
    superops: np.ndarray  # (N, N, 16, 16); diagonal unused
    diff_weight: float
    ghost: np.ndarray | None = None  # N = 1: site generator acting next to an empty partner
    interaction: str = "hard_sphere"

    @classmethod
    def build(cls, model: SpinModel, jumps: JumpSet, weighting: str = "consistent",
              interaction: str = "hard_sphere") -> PairOperators:
        if weighting not in WEIGHTINGS:
            raise ValueError(f"weighting must be one of {WEIGHTINGS}")
        if interaction not in INTERACTIONS:
            raise ValueError(f"interaction must be one of {INTERACTIONS}")
        n = model.n_sites
        rates = jumps.site_rates()
        if n == 1:
            h, collapse = _single_parts(model, rates)
            return cls(1, weighting, np.zeros((1, 1, 16, 16), np.complex128), 1.0, _superop(h, collapse),
                       interaction)
        w = 1.0 / (n - 1)
        sup = np.zeros((n, n, 16, 16), np.complex128)
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                # consistent: drop site j's local terms, they belong to j's own update
                w_j = w if weighting == "literal" else 0.0
                v_ij = pair_interaction(model, i, j, interaction)
                h, collapse = _pair_parts(model, rates, i, j, w, w_j, v_ij)
                sup[i, j] = _superop(h, collapse)
        diff = 1.0 if weighting == "literal" else w
        return cls(n, weighting, sup, diff, None, interaction)


def _single_parts(model, rates):
    hi, ci = _local_terms(model, rates, 0)
    return np.kron(hi, EYE2), [np.kron(ci, EYE2)]


def residual_coefficients(ops: PairOperators, state: ProductState, i: int, tau: float):
    """Affine form of the site-i defects: matrix_j(alpha') = c0[j] + sum_mu alpha'_mu c1[j, mu]."""
    n = state.n_sites
    alpha_i = state.alphas[i]
    if n == 1:
        partners = [None]
        rho_js = [single_site_density(VACUUM_ALPHA)]
        sups = ops.ghost[None]
    else:
        partners = np.r_[0:i, i + 1:n]
        rho_js = 0.5 * (PAULI[0] + np.einsum("jm,mab->jab", state.alphas[partners], PAULI[1:]))
        sups = ops.superops[i, partners]
    c0, c1 = kernels.residual_coeffs(sups, np.asarray(rho_js), PAULI, alpha_i, ops.diff_weight, tau)
    return c0.reshape(-1, 4, 4), c1.reshape(-1, 3, 4, 4)


def residual(model: SpinModel, jumps: JumpSet, i: int, alpha_new, state: ProductState, tau: float, *,
             weighting="consistent", aggregate="hs", interaction="hard_sphere",
             ops: PairOperators | None = None) -> float:
    """Aggregated size of the two-site implicit-midpoint defects of site ``i``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    ops = ops or PairOperators.build(model, jumps, weighting, interaction)
    c0, c1 = residual_coefficients(ops, state, i, tau)
    a = np.asarray(alpha_new, dtype=float)
    mats = c0 + np.einsum("m,jmab->jab", a, c1)
    if aggregate == "hs":
        return float(np.sum(np.abs(mats) ** 2))
    norms = np.array([kernels.trace_norm(m) for m in mats])
    return float(np.sum(norms**2) if aggregate == "sumsq" else np.sum(norms))


@dataclass
class SiteResult:
    alpha: np.ndarray
    value: float
    iterations: int
    converged: bool


def minimize_site(model: SpinModel, jumps: JumpSet, i: int, state: ProductState, tau: float, *,
                  start=None, scale=None, weighting="consistent", aggregate="hs",
                  interaction="hard_sphere", ops: PairOperators | None = None, xtol=1e-11, max_iter=4000,
                  restarts=2) -> SiteResult:
    """Constrained minimiser of :func:`residual` over |alpha| <= 1 and the blockade cap."""
    if aggregate not in AGGREGATES:
        raise ValueError(f"aggregate must be one of {AGGREGATES}")
    ops = ops or PairOperators.build(model, jumps, weighting, interaction)
    c0, c1 = residual_coefficients(ops, state, i, tau)
    cap = population_cap(state.populations(), i, model.blockade_sites)
    x0 = state.alphas[i] if start is None else np.asarray(start, dtype=float)
    if aggregate == "hs":
        x0 = _least_squares_alpha(c0, c1)
    x0 = kernels.project_alpha(x0, cap)
    if scale is None:
        scale = np.full(3, max(1e-6, 0.1 * tau * _rate_scale(model, jumps)))
    scale = np.maximum(np.asarray(scale, dtype=float), 10 * xtol)
    mode = AGGREGATES.index(aggregate)
    alpha, value, iters, ok = kernels.minimize_alpha(c0, c1, cap, mode, x0, scale, xtol=xtol, max_iter=max_iter)
    for _ in range(restarts):
        # a fresh simplex guards against Nelder-Mead stalling on kinks
        alpha2, value2, it2, ok2 = kernels.minimize_alpha(c0, c1, cap, mode, alpha, 0.1 * scale, xtol=xtol,
                                                          max_iter=max_iter)
        iters += it2
        improved = value2 < value - 1e-14 * max(abs(value), 1e-300)
        if value2 <= value:
            alpha, value, ok = alpha2, value2, ok2
        if not improved:
            break
    if not ok:
        log.warning("site %d: simplex did not converge in %d iterations (residual %.3e)", i, max_iter, value)
    return SiteResult(alpha, value, iters, ok)


def _least_squares_alpha(c0, c1):
    """Unconstrained minimiser of sum_j ||c0[j] + x . c1[j]||_F^2 (the objective is quadratic in x)."""
    a = c1.transpose(1, 0, 2, 3).reshape(3, -1)
    b = c0.reshape(-1)
    gram = np.real(a.conj() @ a.T)
    rhs = -np.real(a.conj() @ b)
    return np.linalg.lstsq(gram, rhs, rcond=None)[0]


def _rate_scale(model: SpinModel, jumps: JumpSet) -> float:
    rates = [abs(model.j1), model.pump] + [jp.rate for jp in jumps]
    top = max(rates)
    return float(top) if top > 0 else 1.0


def default_tau(model: SpinModel, jumps: JumpSet) -> float:
    """0.01 / max_rate."""
    return 0.01 / _rate_scale(model, jumps)


@dataclass
class VariationalRun:
    series: ObservableSeries
    states: list
    final: ProductState
    stats: dict = field(default_factory=dict)


def sweep_evolve(model: SpinModel, jumps: JumpSet, state: ProductState | None, t_grid, *, tau=None,
                 n_sweeps=1, weighting="consistent", aggregate="hs", interaction="hard_sphere", xtol=1e-11,
                 stop_when_stationary: float | None = None) -> VariationalRun:
    """Evolve a product state, sampling populations and I_out on ``t_grid``.

    ``t_grid`` must be uniform; each interval is split into an integer number
    of steps no longer than ``tau`` (default 0.01 / max_rate).  Within a step
    sites are updated in ascending order and later sites see earlier updates.
    """
    n = model.n_sites
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    if t_grid.size > 2 and not np.allclose(np.diff(t_grid), t_grid[1] - t_grid[0], rtol=1e-9, atol=0):
        raise ValueError("time grid must be uniform")
    state = ProductState.vacuum(n) if state is None else state.copy()
    if state.n_sites != n:
        raise ValueError(f"state has {state.n_sites} sites, model has {n}")
    tau_max = default_tau(model, jumps) if tau is None else float(tau)
    if t_grid.size > 1:
        steps = max(1, int(math.ceil((t_grid[1] - t_grid[0]) / tau_max - 1e-9)))
        tau = (t_grid[1] - t_grid[0]) / steps
    else:
        steps, tau = 0, tau_max
    ops = PairOperators.build(model, jumps, weighting, interaction)
    prev = state.alphas.copy()
    pops = np.empty((t_grid.size, n))
    pops[0] = state.populations()
    snapshots = [state.copy()]
    stats = {"tau": tau, "site_updates": 0, "unconverged": 0, "max_residual": 0.0, "last_change": math.nan,
             "last_rate": math.nan}
    rate = _rate_scale(model, jumps)
    last_k = t_grid.size - 1
    for k in range(1, t_grid.size):
        for _ in range(steps):
            before = state.alphas.copy()
            guess = 2.0 * state.alphas - prev
            for _sweep in range(n_sweeps):
                for i in range(n):
                    start = guess[i] if _sweep == 0 else state.alphas[i]
                    scale = np.maximum(np.abs(state.alphas[i] - prev[i]), 0.1 * tau * rate)
                    res = minimize_site(model, jumps, i, state, tau, start=start, scale=scale,
                                        weighting=weighting, aggregate=aggregate, ops=ops, xtol=xtol)
                    state.alphas[i] = res.alpha
                    stats["site_updates"] += 1
                    stats["unconverged"] += 0 if res.converged else 1
                    stats["max_residual"] = max(stats["max_residual"], res.value)
            prev = before
            if not state.is_feasible(model.blockade_sites):
                bad = _first_infeasible(state, model.blockade_sites)
                raise ConstraintError(f"product state infeasible after step at site {bad}", bad)
            stats["last_change"] = float(np.max(np.abs(state.alphas - before)))
            stats["last_rate"] = stats["last_change"] / tau
        pops[k] = state.populations()
        snapshots.append(state.copy())
        if stop_when_stationary is not None and stats["last_rate"] < stop_when_stationary:
            last_k = k
            break
    t_used = t_grid[: last_k + 1]
    pops = pops[: last_k + 1]
    series = {f"pop_{i + 1}": pops[:, i] for i in range(n)}
    series["i_out"] = model.output_rate * pops[:, n - 1]
    out = ObservableSeries(t_used, series, meta=dict(stats))
    return VariationalRun(out, snapshots, state, stats)


def _first_infeasible(state: ProductState, b: int) -> int:
    lengths = np.linalg.norm(state.alphas, axis=1)
    bad = np.flatnonzero(lengths > 1 + FEASIBILITY_SLACK)
    if bad.size:
        return int(bad[0])
    sums = state.window_sums(b)
    return int(np.flatnonzero(sums > 1 + FEASIBILITY_SLACK)[0])


def variational_steady_state(model: SpinModel, jumps: JumpSet, *, tau=None, tol=1e-5, t_max=None,
                             sample_dt=None, **kwargs) -> VariationalRun:
    """Evolve from vacuum until every Bloch component moves slower than ``tol`` per us.

    The test is on the rate max|d alpha|/tau rather than the raw per-step
    change; with the default step the raw change is tiny long before the
    slow refill of the far end has settled.
    """
    rate = _rate_scale(model, jumps)
    t_max = 200.0 / rate if t_max is None else t_max
    sample_dt = 1.0 / rate if sample_dt is None else sample_dt
    grid = np.arange(0.0, t_max + 0.5 * sample_dt, sample_dt)
    run = sweep_evolve(model, jumps, None, grid, tau=tau, stop_when_stationary=tol, **kwargs)
    run.stats["converged"] = run.stats["last_rate"] < tol
    if not run.stats["converged"]:
        log.warning("variational steady state not reached by t=%.4g (last rate %.2e per us)", t_max,
                    run.stats["last_rate"])
    return run


def setback_sites(populations, last: int | None = None) -> list:
    """Sites emptied after a detection at the last site.

    Walking inward from the second-to-last site, sites are collected until
    their populations add up to at least one; the last site is always included.
    """
    n = np.asarray(populations, dtype=float)
    last = n.size - 1 if last is None else last
    chosen = [last]
    total = 0.0
    for i in range(last - 1, -1, -1):
        if total >= 1.0:
            break
        chosen.append(i)
        total += n[i]
    return sorted(chosen)


def g2_variational(model: SpinModel, jumps: JumpSet, state_ss: ProductState, tau_grid, *,
                   tau=None, **kwargs) -> ObservableSeries:
    """g2(tau) of the last site with the self-consistent setback after a detection."""
    n_ss = float(state_ss.populations()[-1])
    if n_ss < 1e-12:
        raise UndefinedCorrelationError(f"steady-state population of the last site is {n_ss:.3e}")
    reset = setback_sites(state_ss.populations())
    start = state_ss.copy()
    start.alphas[reset] = VACUUM_ALPHA
    run = sweep_evolve(model, jumps, start, tau_grid, tau=tau, **kwargs)
    n_last = run.series[f"pop_{model.n_sites}"]
    g2 = g2_normalize(n_ss * n_last, n_ss)
    return ObservableSeries(run.series.t, {"g2": g2}, time_label="tau",
                            meta={"n_ss": n_ss, "reset_sites": reset, **run.stats})
