"""Compare the compiled stepping core against the pure-Python fallback.

Runs the same workloads in two subprocesses (one per backend, selected via
SFK_BACKEND), times them, and checks that both backends produced bitwise
identical final states.

Usage::

    python3 benchmarks/bench_core.py [--T 200] [--repeat 3]
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def _workloads(T: float):
    import numpy as np

    import sfkolmo as sk

    lv = sk.build(
        sk.LVCompetitive(
            a=[3.0, 2.0],
            b=[[2.0, 1.0], [1.0, 2.0]],
            b_hat=[[0.1, 0.05], [0.05, 0.1]],
            r=0.5,
        )
    )
    sir = sk.build(
        sk.SIR(
            a=1.0,
            b1=1.0,
            b2=1.0,
            c1=0.5,
            c2=0.5,
            r=0.5,
            gamma=[[0.3, 0.0], [0.0, 0.3]],
        )
    )
    cfg = sk.SimConfig(dt=1e-3, T=T, burn_in=0.0, seed=7, thinning=100)

    def run_lv():
        return sk.simulate(lv, [1.0, 1.0], cfg)

    def run_sir():
        return sk.simulate(sir, [1.0, 0.5], cfg)

    def run_coupled():
        res = sk.simulate_coupled(
            lv,
            np.array([1.0, 1.0]),
            np.array([2.0, 2.0]),
            sk.CoupledConfig(lambda_tilde=5.0, d0=0.0),
            cfg,
        )
        return res

    return {"lv_delayed": run_lv, "sir_bridge": run_sir, "coupled_pair": run_coupled}


def _state_digest(result) -> str:
    final = getattr(result, "final_state", None)
    if final is None:
        return ""
    return hashlib.sha256(final.samples.tobytes()).hexdigest()[:16]


def _child(T: float, repeat: int) -> None:
    import sfkolmo as sk

    out = {"backend": sk.BACKEND_NAME, "timings": {}, "digests": {}}
    for name, fn in _workloads(T).items():
        fn()  # warm caches and JIT-free import costs
        best = float("inf")
        result = None
        for _ in range(repeat):
            t0 = time.perf_counter()
            result = fn()
            best = min(best, time.perf_counter() - t0)
        out["timings"][name] = best
        out["digests"][name] = _state_digest(result)
    print(json.dumps(out))


def _spawn(backend: str, T: float, repeat: int) -> dict:
    env = dict(os.environ, SFK_BACKEND=backend)
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--child",
         "--T", str(T), "--repeat", str(repeat)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--T", type=float, default=200.0, help="horizon per run")
    parser.add_argument("--repeat", type=int, default=3, help="best-of repeats")
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.child:
        _child(args.T, args.repeat)
        return 0

    compiled = _spawn("compiled", args.T, args.repeat)
    python = _spawn("python", args.T, args.repeat)

    print(f"workload horizons: T = {args.T:g}, dt = 1e-3, best of {args.repeat}")
    print(f"{'workload':<14} {'compiled':>10} {'python':>10} {'speedup':>8}  parity")
    for name in compiled["timings"]:
        tc = compiled["timings"][name]
        tp = python["timings"][name]
        same = compiled["digests"][name] == python["digests"][name]
        parity = "bitwise" if same else "MISMATCH"
        print(f"{name:<14} {tc:>9.3f}s {tp:>9.3f}s {tp / tc:>7.1f}x  {parity}")
    if any(
        compiled["digests"][k] != python["digests"][k] for k in compiled["digests"]
    ):
        print("error: backends disagree on final state", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
