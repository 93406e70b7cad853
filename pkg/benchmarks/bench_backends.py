"""Benchmark the node-replay kernels: numba JIT vs the pure-numpy fallback.

Run:
    python benchmarks/bench_backends.py

The same verification loops back both paths (see arqpc._kernels); this script
times them on instances of growing iteration count and reports the speedup.
Select the library-wide default with ARQPC_BACKEND=numba|numpy.
"""

from __future__ import annotations

import time

from arqpc._kernels import HAVE_NUMBA
from arqpc.worstcase import build_thm61, build_thm63, replay

CASES = [
    ("thm61 p=2 q=1 eps=2^-8", lambda: build_thm61(2, 1, 2.0**-8)),
    ("thm61 p=3 q=2 eps=2^-8", lambda: build_thm61(3, 2, 2.0**-8)),
    ("thm61 p=2 q=2 eps=2^-6", lambda: build_thm61(2, 2, 2.0**-6)),
    ("thm61 p=2 q=2 eps=2^-8", lambda: build_thm61(2, 2, 2.0**-8)),
    ("thm63 p=3 q=3 eps=2^-4", lambda: build_thm63(3, 3, 2.0**-4)),
]


def time_backend(inst, backend: str, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        replay(inst, force_backend=backend, with_trace=False)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    if not HAVE_NUMBA:
        print("numba is not importable; only the numpy path will run")
    print(f"{'case':<28} {'iterations':>12} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, factory in CASES:
        inst = factory()
        if HAVE_NUMBA:
            replay(inst, force_backend="numba", with_trace=False)  # warm the JIT
        t_np = time_backend(inst, "numpy")
        row = f"{name:<28} {inst.k_eps:>12,} {t_np * 1e3:>8.1f}ms"
        if HAVE_NUMBA:
            t_nb = time_backend(inst, "numba")
            row += f" {t_nb * 1e3:>8.1f}ms {t_np / t_nb:>7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
