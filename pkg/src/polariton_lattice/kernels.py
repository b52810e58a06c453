"""Hot numerical kernels, each with a numba loop version and a numpy version.

Basis convention shared by every kernel: a many-body basis index is the
occupation bitstring with site 0 as the least significant bit.  Off-diagonal
Hamiltonian elements are stored as a flat table ``(src, dst, amp)`` meaning
``H[dst, src] += amp``.

The public wrappers at the bottom dispatch on :func:`_accel.get_backend`.
"""

from __future__ import annotations

import types

import numpy as np

from . import _accel
from ._accel import njit

# ---------------------------------------------------------------- numba side


@njit
def _heff_apply_nb(psi, diag, src, dst, amp, out):
    for s in range(psi.shape[0]):
        out[s] = diag[s] * psi[s]
    for e in range(src.shape[0]):
        out[dst[e]] += amp[e] * psi[src[e]]


@njit
def _lindblad_rhs_nb(rho, diag, src, dst, amp, rates, out):
    dim = rho.shape[0]
    # Y = -i H_eff rho
    for a in range(dim):
        da = -1j * diag[a]
        for b in range(dim):
            out[a, b] = da * rho[a, b]
    for e in range(src.shape[0]):
        s, d, c = src[e], dst[e], -1j * amp[e]
        for b in range(dim):
            out[d, b] += c * rho[s, b]
    # out <- Y + Y^dagger
    for a in range(dim):
        out[a, a] = 2.0 * out[a, a].real
        for b in range(a + 1, dim):
            v = out[a, b] + np.conj(out[b, a])
            out[a, b] = v
            out[b, a] = np.conj(v)
    # gamma sigma^- rho sigma^+
    for site in range(rates.shape[0]):
        g = rates[site]
        if g == 0.0:
            continue
        m = 1 << site
        for a in range(dim):
            if a & m:
                continue
            for b in range(dim):
                if b & m:
                    continue
                out[a, b] += g * rho[a | m, b | m]


@njit
def _rk4_density_nb(rho, n_steps, dt, diag, src, dst, amp, rates):
    k1 = np.empty_like(rho)
    k2 = np.empty_like(rho)
    k3 = np.empty_like(rho)
    k4 = np.empty_like(rho)
    tmp = np.empty_like(rho)
    for _ in range(n_steps):
        _lindblad_rhs_nb(rho, diag, src, dst, amp, rates, k1)
        tmp[:] = rho + 0.5 * dt * k1
        _lindblad_rhs_nb(tmp, diag, src, dst, amp, rates, k2)
        tmp[:] = rho + 0.5 * dt * k2
        _lindblad_rhs_nb(tmp, diag, src, dst, amp, rates, k3)
        tmp[:] = rho + dt * k3
        _lindblad_rhs_nb(tmp, diag, src, dst, amp, rates, k4)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


@njit
def _rk4_psi_step_nb(psi, h, diag, src, dst, amp, out, k1, k2, k3, k4, tmp):
    # d psi / dt = -i H_eff psi
    _heff_apply_nb(psi, diag, src, dst, amp, k1)
    k1 *= -1j
    tmp[:] = psi + 0.5 * h * k1
    _heff_apply_nb(tmp, diag, src, dst, amp, k2)
    k2 *= -1j
    tmp[:] = psi + 0.5 * h * k2
    _heff_apply_nb(tmp, diag, src, dst, amp, k3)
    k3 *= -1j
    tmp[:] = psi + h * k3
    _heff_apply_nb(tmp, diag, src, dst, amp, k4)
    k4 *= -1j
    out[:] = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit
def _norm2_nb(psi):
    s = 0.0
    for x in psi:
        s += x.real * x.real + x.imag * x.imag
    return s


@njit
def _evolve_until_nb(psi, duration, dt, threshold, rel_tol, diag, src, dst, amp):
    """Advance ``psi`` in place; stop early when its squared norm reaches ``threshold``.

    Returns ``(elapsed, crossed)``.  The crossing time is located by bisection
    on the length of the final RK4 sub-step.
    """
    new = np.empty_like(psi)
    trial = np.empty_like(psi)
    k1 = np.empty_like(psi)
    k2 = np.empty_like(psi)
    k3 = np.empty_like(psi)
    k4 = np.empty_like(psi)
    tmp = np.empty_like(psi)
    elapsed = 0.0
    while duration - elapsed > 1e-14 * duration:
        h = min(dt, duration - elapsed)
        _rk4_psi_step_nb(psi, h, diag, src, dst, amp, new, k1, k2, k3, k4, tmp)
        if _norm2_nb(new) > threshold:
            psi[:] = new
            elapsed += h
            continue
        lo = 0.0
        hi = h
        while hi - lo > rel_tol * h:
            mid = 0.5 * (lo + hi)
            _rk4_psi_step_nb(psi, mid, diag, src, dst, amp, trial, k1, k2, k3, k4, tmp)
            if _norm2_nb(trial) > threshold:
                lo = mid
            else:
                hi = mid
        _rk4_psi_step_nb(psi, hi, diag, src, dst, amp, new, k1, k2, k3, k4, tmp)
        psi[:] = new
        return elapsed + hi, True
    return elapsed, False


@njit
def _trace_norm_nb(mat):
    """Trace norm of a small Hermitian matrix by cyclic complex Jacobi rotations."""
    n = mat.shape[0]
    a = mat.copy()
    for _sweep in range(50):
        off = 0.0
        diag = 0.0
        for p in range(n):
            diag += a[p, p].real ** 2
            for q in range(p + 1, n):
                off += a[p, q].real ** 2 + a[p, q].imag ** 2
        if off <= 1e-30 * (diag + off) or off < 1e-300:
            break
        for p in range(n):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                theta = 0.5 * (a[q, q].real - a[p, p].real) / mag
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ph = apq / mag
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * np.conj(ph) * akq
                    a[k, q] = s * ph * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * ph * aqk
                    a[q, k] = s * np.conj(ph) * apk + c * aqk
    total = 0.0
    for p in range(n):
        total += abs(a[p, p].real)
    return total


@njit
def _residual_coeffs_nb(sups, rho_js, pauli, alpha, wd, tau):
    n_pairs = sups.shape[0]
    c0 = np.zeros((n_pairs, 16), np.complex128)
    c1 = np.zeros((n_pairs, 3, 16), np.complex128)
    b = np.empty((4, 16), np.complex128)
    half = 0.5 * tau
    for p in range(n_pairs):
        for m in range(4):
            for a in range(2):
                for c in range(2):
                    for bb in range(2):
                        for d in range(2):
                            b[m, (a * 2 + c) * 4 + bb * 2 + d] = 0.5 * pauli[m, a, bb] * rho_js[p, c, d]
        for m in range(4):
            for x in range(16):
                kb = 0j
                for y in range(16):
                    kb += sups[p, x, y] * b[m, y]
                if m == 0:
                    c0[p, x] -= tau * kb
                else:
                    c1[p, m - 1, x] = wd * b[m, x] - half * kb
                    c0[p, x] -= alpha[m - 1] * (wd * b[m, x] + half * kb)
    return c0, c1

@njit
def _project_alpha_nb(x, cap, out):
    r = np.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    scale = 1.0 / r if r > 1.0 else 1.0
    for k in range(3):
        out[k] = x[k] * scale
    zmax = 2.0 * cap - 1.0
    if out[2] > zmax:
        out[2] = zmax
        t2 = out[0] * out[0] + out[1] * out[1]
        lim = max(0.0, 1.0 - zmax * zmax)
        if t2 > lim:
            f = np.sqrt(lim / t2)
            out[0] *= f
            out[1] *= f


@njit
def _site_objective_nb(x, data):
    # mode 0: sum of trace norms, 1: sum of squared trace norms, 2: sum of squared Frobenius norms
    c0, c1, cap, mode = data
    p = np.empty(3)
    _project_alpha_nb(x, cap, p)
    work = np.empty((4, 4), dtype=np.complex128)
    total = 0.0
    for j in range(c0.shape[0]):
        for a in range(4):
            for b in range(4):
                work[a, b] = c0[j, a, b] + p[0] * c1[j, 0, a, b] + p[1] * c1[j, 1, a, b] + p[2] * c1[j, 2, a, b]
        if mode == 2:
            for a in range(4):
                for b in range(4):
                    total += work[a, b].real ** 2 + work[a, b].imag ** 2
        else:
            tn = _trace_norm_nb(work)
            total += tn * tn if mode == 1 else tn
    dist = np.sqrt((x[0] - p[0]) ** 2 + (x[1] - p[1]) ** 2 + (x[2] - p[2]) ** 2)
    return total + dist


def _nelder_mead_core(data, x0, scale, xtol, ftol, max_iter):
    """Deterministic Nelder-Mead on R^3 (standard coefficients 1, 2, 1/2, 1/2).

    The objective is the module-level name ``_objective``: the compiled copy binds it to
    the numba objective, the interpreted copy to the numpy one.
    """
    sim = np.empty((4, 3))
    fs = np.empty(4)
    for k in range(4):
        for d in range(3):
            sim[k, d] = x0[d]
    for d in range(3):
        sim[d + 1, d] += scale[d]
    for k in range(4):
        fs[k] = _objective(sim[k], data)
    it = 0
    converged = False
    centroid = np.empty(3)
    while it < max_iter:
        order = np.argsort(fs)
        sim = sim[order]
        fs = fs[order]
        size = 0.0
        for k in range(1, 4):
            for d in range(3):
                size = max(size, abs(sim[k, d] - sim[0, d]))
        # absolute floor: an exact fit has f = 0, where a relative test never passes
        if size <= xtol and fs[3] - fs[0] <= ftol * abs(fs[0]) + 1e-30:
            converged = True
            break
        for d in range(3):
            centroid[d] = (sim[0, d] + sim[1, d] + sim[2, d]) / 3.0
        xr = 2.0 * centroid - sim[3]
        fr = _objective(xr, data)
        shrink = False
        if fr < fs[0]:
            xe = 3.0 * centroid - 2.0 * sim[3]
            fe = _objective(xe, data)
            if fe < fr:
                sim[3] = xe
                fs[3] = fe
            else:
                sim[3] = xr
                fs[3] = fr
        elif fr < fs[2]:
            sim[3] = xr
            fs[3] = fr
        elif fr < fs[3]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = _objective(xc, data)
            if fc <= fr:
                sim[3] = xc
                fs[3] = fc
            else:
                shrink = True
        else:
            xc = centroid + 0.5 * (sim[3] - centroid)
            fc = _objective(xc, data)
            if fc < fs[3]:
                sim[3] = xc
                fs[3] = fc
            else:
                shrink = True
        if shrink:
            for k in range(1, 4):
                sim[k] = sim[0] + 0.5 * (sim[k] - sim[0])
                fs[k] = _objective(sim[k], data)
        it += 1
    best = np.argmin(fs)
    return sim[best].copy(), fs[best], it, converged


_objective = _site_objective_nb
_nelder_mead_nb = njit(_nelder_mead_core)
# ---------------------------------------------------------------- numpy side


def _heff_apply_np(psi, diag, src, dst, amp):
    out = diag * psi
    np.add.at(out, dst, amp * psi[src])
    return out


def _lindblad_rhs_np(rho, diag, src, dst, amp, rates):
    x = diag[:, None] * rho
    np.add.at(x, dst, amp[:, None] * rho[src])
    y = -1j * x
    out = y + y.conj().T
    dim = rho.shape[0]
    states = np.arange(dim)
    for site in np.flatnonzero(rates):
        m = 1 << int(site)
        low = states[(states & m) == 0]
        out[np.ix_(low, low)] += rates[site] * rho[np.ix_(low | m, low | m)]
    return out


def _rk4_density_np(rho, n_steps, dt, diag, src, dst, amp, rates):
    for _ in range(n_steps):
        k1 = _lindblad_rhs_np(rho, diag, src, dst, amp, rates)
        k2 = _lindblad_rhs_np(rho + 0.5 * dt * k1, diag, src, dst, amp, rates)
        k3 = _lindblad_rhs_np(rho + 0.5 * dt * k2, diag, src, dst, amp, rates)
        k4 = _lindblad_rhs_np(rho + dt * k3, diag, src, dst, amp, rates)
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return rho


def _rk4_psi_step_np(psi, h, diag, src, dst, amp):
    f = lambda v: -1j * _heff_apply_np(v, diag, src, dst, amp)  # noqa: E731
    k1 = f(psi)
    k2 = f(psi + 0.5 * h * k1)
    k3 = f(psi + 0.5 * h * k2)
    k4 = f(psi + h * k3)
    return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _evolve_until_np(psi, duration, dt, threshold, rel_tol, diag, src, dst, amp):
    elapsed = 0.0
    while duration - elapsed > 1e-14 * duration:
        h = min(dt, duration - elapsed)
        new = _rk4_psi_step_np(psi, h, diag, src, dst, amp)
        if np.vdot(new, new).real > threshold:
            psi[:] = new
            elapsed += h
            continue
        lo, hi = 0.0, h
        while hi - lo > rel_tol * h:
            mid = 0.5 * (lo + hi)
            trial = _rk4_psi_step_np(psi, mid, diag, src, dst, amp)
            if np.vdot(trial, trial).real > threshold:
                lo = mid
            else:
                hi = mid
        psi[:] = _rk4_psi_step_np(psi, hi, diag, src, dst, amp)
        return elapsed + hi, True
    return elapsed, False

def _residual_coeffs_np(sups, rho_js, pauli, alpha, wd, tau):
    n_pairs = sups.shape[0]
    b = 0.5 * np.einsum("mab,jcd->jmacbd", pauli, rho_js).reshape(n_pairs, 4, 16)
    kb = np.einsum("jxy,jmy->jmx", sups, b)
    c1 = wd * b[:, 1:] - 0.5 * tau * kb[:, 1:]
    c0 = -np.einsum("m,jmx->jx", alpha, wd * b[:, 1:] + 0.5 * tau * kb[:, 1:]) - tau * kb[:, 0]
    return c0, c1


def _project_alpha_np(x, cap):
    out = np.array(x, dtype=float)
    r = np.linalg.norm(out)
    if r > 1.0:
        out /= r
    zmax = 2.0 * cap - 1.0
    if out[2] > zmax:
        out[2] = zmax
        t2 = out[0] ** 2 + out[1] ** 2
        lim = max(0.0, 1.0 - zmax * zmax)
        if t2 > lim:
            out[:2] *= np.sqrt(lim / t2)
    return out


def _site_objective_np(x, data):
    c0, c1, cap, mode = data
    p = _project_alpha_np(x, cap)
    mats = c0 + np.einsum("m,jmab->jab", p, c1)
    if mode == 2:
        total = float(np.sum(np.abs(mats) ** 2))
    else:
        tn = np.abs(np.linalg.eigvalsh(mats)).sum(axis=1)
        total = float(np.sum(tn * tn) if mode == 1 else np.sum(tn))
    return total + float(np.linalg.norm(x - p))


_nelder_mead_np = types.FunctionType(
    _nelder_mead_core.__code__, {**globals(), "_objective": _site_objective_np}, "_nelder_mead_np"
)


# ---------------------------------------------------------------- dispatch


def _use_numba():
    return _accel.get_backend() == "numba"


def heff_apply(psi, diag, src, dst, amp):
    """Return ``H psi`` for the diagonal + hop-table operator (``diag`` may be complex)."""
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    diag = np.asarray(diag, dtype=np.complex128)
    if _use_numba():
        out = np.empty_like(psi)
        _heff_apply_nb(psi, diag, src, dst, amp, out)
        return out
    return _heff_apply_np(psi, diag, src, dst, amp)


def lindblad_rhs(rho, diag, src, dst, amp, rates):
    """Lindblad generator on a Hermitian ``rho``.

    ``diag`` is the complex diagonal of ``H_eff = H - (i/2) sum_c gamma_c n_c``;
    ``rates[c]`` is the total decay rate of ``sigma^-`` on site ``c``.
    """
    rho = np.ascontiguousarray(rho, dtype=np.complex128)
    diag = np.asarray(diag, dtype=np.complex128)
    if _use_numba():
        out = np.empty_like(rho)
        _lindblad_rhs_nb(rho, diag, src, dst, amp, rates, out)
        return out
    return _lindblad_rhs_np(rho, diag, src, dst, amp, rates)


def rk4_density(rho, n_steps, dt, diag, src, dst, amp, rates):
    """Advance ``rho`` by ``n_steps`` RK4 steps of size ``dt`` (in place, also returned)."""
    if _use_numba():
        return _rk4_density_nb(rho, int(n_steps), float(dt), diag, src, dst, amp, rates)
    return _rk4_density_np(rho, int(n_steps), float(dt), diag, src, dst, amp, rates)


def evolve_until(psi, duration, dt, threshold, rel_tol, diag, src, dst, amp):
    """Non-unitary RK4 evolution under ``H_eff`` up to ``duration`` or a norm crossing."""
    if _use_numba():
        return _evolve_until_nb(psi, float(duration), float(dt), float(threshold), float(rel_tol),
                                diag, src, dst, amp)
    return _evolve_until_np(psi, float(duration), float(dt), float(threshold), float(rel_tol),
                            diag, src, dst, amp)


def trace_norm(mat):
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    mat = np.ascontiguousarray(mat, dtype=np.complex128)
    if _use_numba():
        return float(_trace_norm_nb(mat))
    return float(np.abs(np.linalg.eigvalsh(mat)).sum())


def project_alpha(x, cap=1.0):
    """Radial projection onto the unit ball, then clamp ``n = (1 + a_z)/2 <= cap``."""
    if _use_numba():
        out = np.empty(3)
        _project_alpha_nb(np.asarray(x, dtype=float), float(cap), out)
        return out
    return _project_alpha_np(x, cap)


def site_objective(x, c0, c1, cap, mode):
    data = (c0, c1, float(cap), int(mode))
    x = np.asarray(x, dtype=float)
    if _use_numba():
        return float(_site_objective_nb(x, data))
    return _site_objective_np(x, data)


def minimize_alpha(c0, c1, cap, mode, x0, scale, xtol=1e-11, ftol=1e-12, max_iter=4000):
    """Minimise the site residual over projected Bloch vectors.

    ``c0`` has shape ``(n_pairs, 4, 4)`` and ``c1`` shape ``(n_pairs, 3, 4, 4)``; the
    residual matrix of pair ``j`` is ``c0[j] + sum_mu x_mu c1[j, mu]``.  ``mode``
    selects how pairs are aggregated: 0 sum of trace norms, 1 sum of squared
    trace norms, 2 sum of squared Frobenius norms.
    Returns ``(alpha, value, iterations, converged)`` with ``alpha`` projected.
    """
    c0 = np.ascontiguousarray(c0, dtype=np.complex128)
    c1 = np.ascontiguousarray(c1, dtype=np.complex128)
    data = (c0, c1, float(cap), int(mode))
    x0 = np.asarray(x0, dtype=float).copy()
    scale = np.asarray(scale, dtype=float).copy()
    if _use_numba():
        x, fx, it, ok = _nelder_mead_nb(data, x0, scale, xtol, ftol, max_iter)
    else:
        x, fx, it, ok = _nelder_mead_np(data, x0, scale, xtol, ftol, max_iter)
    return project_alpha(x, cap), float(fx), int(it), bool(ok)


def residual_coeffs(sups, rho_js, pauli, alpha, wd, tau):
    """Affine coefficients of the pair defects; shapes ``(P, 16)`` and ``(P, 3, 16)``."""
    fn = _residual_coeffs_nb if _use_numba() else _residual_coeffs_np
    return fn(np.ascontiguousarray(sups), np.ascontiguousarray(rho_js, dtype=np.complex128),
              pauli, np.asarray(alpha, dtype=np.float64), float(wd), float(tau))
