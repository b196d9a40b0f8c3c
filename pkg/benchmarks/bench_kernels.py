"""Time the numba and numpy backends of the 1D profile kernel and the full smoother.

    python3 benchmarks/bench_kernels.py [--n 1000000] [--repeat 5]
"""
from __future__ import annotations

import argparse
import os
import timeit

import numpy as np

from seclab import _kernels
from seclab.smoothing import build_phi


def best(fn, repeat: int) -> float:
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1_000_000, help="points per call")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--eps", type=float, default=1e-3)
    args = ap.parse_args()

    sm = build_phi(2, args.eps, 10.38)
    rng = np.random.default_rng(0)
    x = rng.uniform(0.0, 2 * sm.ht, args.n)
    X = rng.uniform(0.0, 2 * sm.ht, (args.n // 10, 2))

    rows = [("np_profile_1d", best(lambda: _kernels.np_profile_1d(x, sm.prm, sm.lo, sm.hi), args.repeat))]
    if _kernels.numba is not None:
        _kernels.nb_profile_1d(x[:10], sm.prm, sm.lo, sm.hi)  # compile
        rows.append(("nb_profile_1d", best(lambda: _kernels.nb_profile_1d(x, sm.prm, sm.lo, sm.hi),
                                           args.repeat)))
        diff = np.max(np.abs(_kernels.nb_profile_1d(x, sm.prm, sm.lo, sm.hi)
                             - _kernels.np_profile_1d(x, sm.prm, sm.lo, sm.hi)))
    else:
        diff = float("nan")

    for backend in ("0", "1"):
        os.environ["SECLAB_DISABLE_NUMBA"] = backend
        label = "phi2 evaluate (" + ("numpy" if backend == "1" else "numba") + ")"
        sm.evaluate(X[:10])
        rows.append((label, best(lambda: sm.evaluate(X), args.repeat)))
    os.environ.pop("SECLAB_DISABLE_NUMBA")

    print(f"eps={args.eps}  1D points={args.n}  2D points={len(X)}  backend max |diff|={diff:.3g}")
    for name, t in rows:
        print(f"{name:28} {t * 1e3:9.2f} ms")


if __name__ == "__main__":
    main()
