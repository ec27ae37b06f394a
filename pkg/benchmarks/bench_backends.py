"""Time the numpy and numba kernel paths side by side.

Each backend runs in its own subprocess because the choice is fixed at import
time by ``GOLDSTONE_GD_BACKEND``. Numba timings exclude JIT compilation (one
warm-up call per kernel).

    python benchmarks/bench_backends.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def measure(repeat):
    from goldstone_gd import kernels
    from goldstone_gd._backend import BACKEND
    from goldstone_gd.chain import ChainProblem
    from goldstone_gd.experiment import DEFAULT_BENCH
    from goldstone_gd.gauge import precompute_couplings, solve_gauge_direct
    from goldstone_gd.models import generate_ground_truth_sequence
    from goldstone_gd.optimizer import TrainConfig, inject_goldstone_mode, run_goldstone_gd, run_plain_gd

    p = DEFAULT_BENCH["problem"]
    Z_star, model = generate_ground_truth_sequence(p["d"], p["n"], p["T"], p["drift"], seed=p["seed"])
    problem = ChainProblem(model, p["lam"])
    Z = inject_goldstone_mode(Z_star, 0.5, 1)
    G = np.ascontiguousarray(model.targets)
    M = np.ascontiguousarray(precompute_couplings(Z))
    grad = np.zeros_like(Z)
    cfg = TrainConfig(gd_steps_per_cycle=50, max_cycles=4, grad_tol=1e-300, record_wall_time=False)

    cases = {
        "gram_value_grad": lambda: kernels.gram_value_grad(Z, G),
        "spring_value_grad": lambda: kernels.spring_value_grad(Z, 1.0, grad),
        "gauge_blocks": lambda: kernels.gauge_blocks(M),
        "solve_gauge_direct": lambda: solve_gauge_direct(M),
        "plain_gd_200_steps": lambda: run_plain_gd(problem, Z, cfg),
        "goldstone_gd_200_steps": lambda: run_goldstone_gd(problem, Z, cfg),
    }
    timings = {}
    for name, fn in cases.items():
        fn()
        timer = timeit.Timer(fn)
        number, _ = timer.autorange()
        timings[name] = min(timer.repeat(repeat, number)) / number
    return {"backend": BACKEND, "seconds": timings}


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", help="write results here")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)

    if args.worker:
        print(json.dumps(measure(args.repeat)))
        return 0

    results = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, GOLDSTONE_GD_BACKEND=backend)
        out = subprocess.run(
            [sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True, check=True,
        )
        payload = json.loads(out.stdout.strip().splitlines()[-1])
        if payload["backend"] != backend:
            print(f"warning: requested {backend}, got {payload['backend']}", file=sys.stderr)
        results[backend] = payload["seconds"]

    print(f"{'case':<26}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name in results["numpy"]:
        a, b = results["numpy"][name], results["numba"][name]
        print(f"{name:<26}{a * 1e6:>10.1f}us{b * 1e6:>10.1f}us{a / b:>9.2f}x")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
