"""Compare the numba and pure-numpy kernel paths.

    python3 benchmarks/bench_kernels.py [--cutoff 12] [--repeat 20]

Times one RK4 step of the ideal generator, one scheme-2 Kraus event and one
cavity-damping map on each path, and checks that both paths agree.
"""

import argparse
import time

import numpy as np

from twomodecat import _kernels
from twomodecat.config import DEFAULT_CONFIG_TEXT, parse_config
from twomodecat.oracle import ideal_generator
from twomodecat.protocol import scheme_L2


def timeit(fn, repeat):
    fn()  # warm-up (and JIT compile)
    best = np.inf
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def random_dm(dim, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = x @ x.conj().T
    return rho / np.trace(rho)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--cutoff", type=int, default=12)
    p.add_argument("--repeat", type=int, default=20)
    args = p.parse_args()

    cfg = parse_config(DEFAULT_CONFIG_TEXT).with_overrides(cutoff_a=args.cutoff, cutoff_b=args.cutoff)
    spec = cfg.field_spec()
    rho = random_dm(spec.dim)
    rates = cfg.rates()
    gen = ideal_generator(1.0, rates.gamma1, rates.gamma2, 1e-3, spec)
    dt = gen.stable_dt()
    K = scheme_L2(cfg.l2_params(), spec).kraus()
    eta = np.exp(-2e-3)

    rows = []
    for name, make in (
        ("rk4 step", lambda nb: (lambda k=gen.kernel(nb): k.rk4(rho, dt, 1))),
        ("kraus event", lambda nb: (lambda ch=_kernels.KrausChannel(K, nb): ch.apply(rho))),
        ("damping", lambda nb: (lambda: _kernels.amplitude_damp(rho, args.cutoff, args.cutoff, eta, eta, nb))),
    ):
        f_nb, f_np = make(True), make(False)
        diff = np.abs(f_nb() - f_np()).max()
        t_nb, t_np = timeit(f_nb, args.repeat), timeit(f_np, args.repeat)
        rows.append((name, t_nb, t_np, diff))

    print(f"cutoff {args.cutoff} (field dimension {spec.dim}), numba available: {_kernels.HAVE_NUMBA}")
    print(f"{'kernel':<12} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8} {'max diff':>10}")
    for name, t_nb, t_np, diff in rows:
        print(f"{name:<12} {1e3 * t_nb:10.3f} {1e3 * t_np:10.3f} {t_np / t_nb:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
