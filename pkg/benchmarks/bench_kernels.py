"""Time the hot kernels under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is called once per backend before timing so that numba
compilation (or cache loading) is excluded.  Results are checked for
agreement between the backends before any timing is reported.
"""

import argparse
import time

import numpy as np

from polariton_lattice import _accel, kernels
from polariton_lattice.lattice import SpinModel
from polariton_lattice.operators import JumpSet, compile_model, vacuum_density


def spin_chain(n):
    m = np.arange(1, n)
    model = SpinModel.translation_invariant(n, 3.0 / (4 * m**2 - 1), 5.0 / (1 + m**6), pump=1.0,
                                            gamma=0.05, gamma_out=1.0, blockade_sites=2)
    return model, compile_model(model, JumpSet.from_model(model))


def cases():
    rng = np.random.default_rng(3)
    _, c10 = spin_chain(10)
    psi = rng.normal(size=c10.dim) + 1j * rng.normal(size=c10.dim)
    _, c7 = spin_chain(7)
    rho = vacuum_density(7)
    c0 = rng.normal(size=(39, 4, 4)) + 1j * rng.normal(size=(39, 4, 4))
    c0 = c0 + c0.conj().transpose(0, 2, 1)
    c1 = rng.normal(size=(39, 3, 4, 4)) + 1j * rng.normal(size=(39, 3, 4, 4))
    c1 = c1 + c1.conj().transpose(0, 1, 3, 2)
    mat = c0[0]
    yield "heff_apply N=10", lambda: kernels.heff_apply(psi, c10.heff_diag, c10.src, c10.dst, c10.amp)
    yield "lindblad_rhs N=7", lambda: kernels.lindblad_rhs(rho, c7.heff_diag, c7.src, c7.dst, c7.amp, c7.rates)
    yield "rk4_density N=7 x20", lambda: kernels.rk4_density(rho.copy(), 20, 1e-3, c7.heff_diag, c7.src,
                                                            c7.dst, c7.amp, c7.rates)
    yield "trace_norm 4x4", lambda: kernels.trace_norm(mat)
    yield "minimize_alpha 39 pairs", lambda: kernels.minimize_alpha(c0, c1, 1.0, 0, np.array([0.0, 0.0, -0.9]),
                                                                    np.full(3, 0.05))[1]


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rows = []
    for name, fn in cases():
        results, timing = {}, {}
        for backend in ("numba", "numpy"):
            old = _accel.set_backend(backend)
            try:
                results[backend] = np.asarray(fn())
                timing[backend] = best_time(fn, args.repeat)
            finally:
                _accel.set_backend(old)
        agree = np.allclose(results["numba"], results["numpy"], rtol=1e-7, atol=1e-9)
        rows.append((name, timing["numba"], timing["numpy"], agree))
    print(f"{'kernel':28s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speed-up':>9s}  agree")
    for name, t_nb, t_np, agree in rows:
        print(f"{name:28s} {1e3 * t_nb:11.3f} {1e3 * t_np:11.3f} {t_np / t_nb:9.1f}  {agree}")


if __name__ == "__main__":
    main()
