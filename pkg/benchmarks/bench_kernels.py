#!/usr/bin/env python3
"""Compiled kernels vs the numpy fallback.

Each backend runs in its own interpreter because the switch is read at
import time. Usage::

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best(fn, repeat):
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def measure(repeat):
    from hybridid import rbd, symreg
    from hybridid._accel import backend
    from hybridid.control import FRANKA_GAINS, PidController, PidGains
    from hybridid.dataset import feature_names
    from hybridid.excitation import MultiSineSpec, generate_reference
    from hybridid.sim import SimConfig, rollout

    arm = rbd.franka7_synthetic()
    rng = np.random.default_rng(0)
    n = 20_000
    Q = rng.uniform(arm.q_min, arm.q_max, (n, 7))
    Qd = rng.uniform(-2, 2, (n, 7))
    Qdd = rng.uniform(-5, 5, (n, 7))
    tau = rbd.inverse_dynamics(arm, Q, Qd, Qdd)

    cfg = SimConfig(horizon=5.0)
    q_ref, qd_ref, *_ = generate_reference(arm, MultiSineSpec(), cfg.tgrid(), np.random.default_rng(1))
    ctrl = PidController(PidGains.from_dict(FRANKA_GAINS, 7))

    names = feature_names(7)
    expr = symreg.parse("tau_i1 + tau_c1 + 6.75*qd1 + 0.01*q2*(qd3 - qdd4*q5)", names)
    F = rng.uniform(-3, 3, (200_000, len(names)))
    Xs = rng.uniform(-3, 3, (2000, 5))
    ys = Xs[:, 0] * Xs[:, 1] + 2.0
    gp = symreg.SymRegConfig(population=200, generations=20, patience=20, seed=0)

    cases = {
        f"inverse_dynamics x{n}": lambda: rbd.inverse_dynamics(arm, Q, Qd, Qdd),
        f"inertia_matrix x{n}": lambda: rbd.inertia_matrix(arm, Q),
        f"forward_dynamics x{n}": lambda: rbd.forward_dynamics(arm, Q, Qd, tau),
        "rollout 5 s (5000 substeps)": lambda: rollout(arm, ctrl, q_ref, qd_ref, cfg),
        "symreg evaluate 200k rows": lambda: symreg.evaluate(expr, F),
        "symreg search 200 x 20 gens": lambda: symreg.fit_symbolic(Xs, ys, gp),
    }
    return {"backend": backend(), "seconds": {k: _best(f, repeat) for k, f in cases.items()}}


def _child(disable, repeat):
    env = dict(os.environ)
    if disable:
        env["HYBRIDID_DISABLE_NUMBA"] = "1"
    else:
        env.pop("HYBRIDID_DISABLE_NUMBA", None)
    out = subprocess.run(
        [sys.executable, __file__, "--child", "--repeat", str(repeat)],
        env=env, check=True, capture_output=True, text=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.repeat)))
        return
    fast = _child(False, args.repeat)
    slow = _child(True, args.repeat)
    print(f"{'workload':<32}{fast['backend']:>12}{slow['backend']:>12}{'speedup':>10}")
    for name, t_fast in fast["seconds"].items():
        t_slow = slow["seconds"][name]
        print(f"{name:<32}{t_fast * 1e3:>10.2f}ms{t_slow * 1e3:>10.2f}ms{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
