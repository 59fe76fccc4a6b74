"""Compare the compiled and numpy density-matrix kernels.

    python benchmarks/bench_kernels.py [--repeat N] [--rounds N]

Each kernel is timed on random states of 2 and 3 qubits (the sizes the
protocol uses) and checked for agreement between backends. With
``--rounds`` a short end-to-end simulation is also timed under each
backend, in a fresh interpreter so the import-time selection applies.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from vbqc import _kernels_py

try:
    from vbqc import _kernels_c
except ImportError:
    _kernels_c = None

END_TO_END = """
import time, numpy as np
from vbqc import qcore, kernels
from vbqc.noise import NoiseModel
from vbqc.session import simulate_test_rounds
qcore.DEBUG_CHECKS = False
t = time.perf_counter()
simulate_test_rounds(NoiseModel(), 2, {rounds}, np.random.default_rng(0))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def random_density(rng, n):
    d = 2**n
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = a @ a.conj().T
    return m / np.trace(m)


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def cases(rng, n):
    rho = random_density(rng, n)
    u1 = random_unitary(rng, 2)
    u2 = random_unitary(rng, 4)
    v = u1[:, 0].copy()
    t = n - 1
    return {
        "apply_1q": (rho, u1, t, n),
        "apply_2q": (rho, u2, 0, t, n),
        "depolarize": (rho, 0.05, t, n),
        "dephase": (rho, 0.05, t, n),
        "project": (rho, v, t, n),
        "partial_trace": (rho, [0], n),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, atol=1e-12)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20000)
    ap.add_argument("--rounds", type=int, default=0, help="also time N end-to-end test rounds")
    args = ap.parse_args(argv)

    if _kernels_c is None:
        print("compiled extension not built; only the numpy backend is available")
    rng = np.random.default_rng(1)
    print(f"{'kernel':<14}{'n':>3}{'numpy us':>12}{'cython us':>12}{'speedup':>9}  agree")
    for n in (2, 3):
        for name, call_args in cases(rng, n).items():
            py = getattr(_kernels_py, name)
            t_py = timeit.timeit(lambda: py(*call_args), number=args.repeat) / args.repeat * 1e6
            if _kernels_c is None:
                print(f"{name:<14}{n:>3}{t_py:>12.2f}{'-':>12}{'-':>9}  -")
                continue
            cy = getattr(_kernels_c, name)
            t_cy = timeit.timeit(lambda: cy(*call_args), number=args.repeat) / args.repeat * 1e6
            ok = same(py(*call_args), cy(*call_args))
            print(f"{name:<14}{n:>3}{t_py:>12.2f}{t_cy:>12.2f}{t_py / t_cy:>9.1f}  {'yes' if ok else 'NO'}")

    if args.rounds:
        for pure in ("1", "0"):
            env = dict(os.environ, VBQC_PURE_PYTHON=pure)
            out = subprocess.run([sys.executable, "-c", END_TO_END.format(rounds=args.rounds)],
                                 env=env, capture_output=True, text=True, check=True).stdout.split()
            print(f"end-to-end {args.rounds} q=2 test rounds, {out[0]} backend: {float(out[1]):.2f} s")


if __name__ == "__main__":
    main()
