"""Benchmark the numba kernels against the pure-numpy fallbacks.

Times each batch kernel on both backends at a few sizes, then measures
end-to-end session throughput under each backend (the fallback is selected
by re-running this script with QOTSIM_PURE_NUMPY=1 in a subprocess).

Run: python benchmarks/bench_kernels.py [--quick]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from qotsim import kernels


def time_call(fn, *args, repeat: int = 5) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(sizes, degrees) -> None:
    backends = kernels.backends()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'n':>3} {'rows':>8}  " +
          "  ".join(f"{name:>12}" for name in backends) + f"  {'speedup':>8}")
    for n in degrees:
        count = int(kernels.FACTORIALS[n])
        for m in sizes:
            indices = rng.integers(0, count, size=m).astype(np.int64)
            words = backends["numpy"]["unrank_batch"](indices, n)
            key_word = np.asarray(rng.permutation(n), dtype=np.int64)
            cases = [
                ("rank_batch", lambda b: b["rank_batch"](words)),
                ("unrank_batch", lambda b: b["unrank_batch"](indices, n)),
                ("apply_right_batch", lambda b: b["apply_right_batch"](indices, key_word)),
                ("compose_rank_batch", lambda b: b["compose_rank_batch"](indices, indices, n)),
                ("index_parity_batch", lambda b: b["index_parity_batch"](indices, n)),
            ]
            for name, call in cases:
                times = {}
                for bname, impls in backends.items():
                    call(impls)  # warm (JIT / cache)
                    times[bname] = time_call(call, impls)
                cols = "  ".join(f"{times[bname] * 1e3:>10.3f}ms" for bname in backends)
                speed = (times["numpy"] / times["numba"]) if "numba" in times else float("nan")
                print(f"{name:<20} {n:>3} {m:>8}  {cols}  {speed:>7.1f}x")


SESSION_SNIPPET = r"""
import time
import numpy as np
from qotsim import kernels
kernels.warm_up()
from qotsim.protocol import ProtocolParams, HonestAlice, HonestBob, InvariantCheatAlice
from qotsim.harness import run_experiment

params = ProtocolParams(n=6, ell=32)
t0 = time.perf_counter()
run_experiment(params, HonestAlice(), HonestBob(), {honest}, base_seed=7)
honest = time.perf_counter() - t0
t0 = time.perf_counter()
run_experiment(params, InvariantCheatAlice(), HonestBob(), {cheat}, base_seed=7)
cheat = time.perf_counter() - t0
print(f"{{kernels.ACTIVE_BACKEND}} honest={{honest / {honest} * 1e3:.2f}}ms/session "
      f"adversarial={{cheat / {cheat} * 1e3:.2f}}ms/session")
"""


def bench_sessions(honest: int, cheat: int) -> None:
    snippet = SESSION_SNIPPET.format(honest=honest, cheat=cheat)
    for forced in ("0", "1"):
        env = dict(os.environ, QOTSIM_PURE_NUMPY=forced)
        out = subprocess.run([sys.executable, "-c", snippet], env=env,
                             capture_output=True, text=True, check=True)
        print(out.stdout.strip())


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true")
    args = parser.parse_args()

    kernels.warm_up()
    if args.quick:
        bench_kernels(sizes=(1_000,), degrees=(6,))
        print()
        bench_sessions(honest=200, cheat=50)
    else:
        bench_kernels(sizes=(1_000, 100_000), degrees=(6, 10))
        print()
        bench_sessions(honest=2_000, cheat=300)


if __name__ == "__main__":
    main()
