"""Timing comparison of the compiled and numpy kernel backends.

The backend is fixed at import time from ORTHOILLUM_BACKEND, so this
script re-runs itself in a subprocess per backend and prints both columns
side by side.  Timed pieces: one objective evaluation (best of N), one
gradient-descent iteration equivalent (evaluation includes gradients),
the foreground-mask median filter, and a full end-to-end correction.

    python3 benchmarks/bench_backends.py [--size NX NY ND] [--repeats N]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _child(size, repeats):
    import numpy as np

    from orthoillum import backends
    from orthoillum.objective import build_problem, evaluate
    from orthoillum.phantom import PhantomSpec, generate_pair
    from orthoillum.pipeline import RunConfig, build_entries, run_correction
    from orthoillum.preprocessing import build_mask
    from orthoillum.spline import zero_field

    _, vol_x, vol_y = generate_pair(PhantomSpec(grid=tuple(size), seed=0))
    config = RunConfig()
    entries = build_entries([vol_x, vol_y], config)
    problem = build_problem(entries, lam=config.lam)
    fields = [zero_field(e.layout, e.volume.n_bscans) for e in entries]

    def best_of(fn, n):
        times = []
        for _ in range(n):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        return min(times)

    t_eval = best_of(lambda: evaluate(problem, fields), repeats)
    t_mask = best_of(lambda: build_mask(vol_x), max(1, repeats // 2))

    t0 = time.perf_counter()
    result = run_correction([vol_x, vol_y], config)
    t_run = time.perf_counter() - t0
    iters = result.trace.records[-1].iteration

    print(
        json.dumps(
            {
                "backend": backends.active().NAME,
                "evaluate_s": t_eval,
                "mask_s": t_mask,
                "run_s": t_run,
                "iterations": iters,
            }
        )
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", nargs=3, type=int, default=[128, 128, 64])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.child:
        _child(args.size, args.repeats)
        return

    rows = {}
    for backend in ("compiled", "python"):
        env = dict(os.environ, ORTHOILLUM_BACKEND=backend)
        cmd = [
            sys.executable, os.path.abspath(__file__), "--child",
            "--size", *map(str, args.size), "--repeats", str(args.repeats),
        ]
        proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"{backend}: failed\n{proc.stderr}", file=sys.stderr)
            continue
        rows[backend] = json.loads(proc.stdout.strip().splitlines()[-1])

    nx, ny, nd = args.size
    print(f"volume pair {nx}x{ny}x{nd}, best of {args.repeats}")
    header = f"{'':14s}{'compiled':>12s}{'python':>12s}{'speedup':>10s}"
    print(header)
    for key, label in (
        ("evaluate_s", "objective"),
        ("mask_s", "mask"),
        ("run_s", "full run"),
    ):
        c = rows.get("compiled", {}).get(key)
        p = rows.get("python", {}).get(key)
        ratio = f"{p / c:9.1f}x" if c and p else "       n/a"
        fmt = lambda v: f"{v:11.3f}s" if v is not None else "        n/a"
        print(f"{label:14s}{fmt(c)}{fmt(p)}{ratio}")
    its = {k: v.get("iterations") for k, v in rows.items()}
    print(f"full-run iterations: {its}")


if __name__ == "__main__":
    main()
