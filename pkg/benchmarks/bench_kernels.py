"""Compiled vs interpreted integrator kernels.

Runs the same oscillator integration in two subprocesses, one with numba and
one with SHADOWFLOW_DISABLE_NUMBA=1, then reports wall times and checks that
both paths produce the same trajectory.

    python benchmarks/bench_kernels.py [--periods 20] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from shadowflow._accel import NUMBA_ENABLED
from shadowflow.dynamics import IntegratorConfig, integrate_extended
from shadowflow.fields import ScalarField
from shadowflow.geometry import MetricField, SymplecticStructure
from shadowflow.oscillator import bound_period, fig1_initial_state, phase_from_state

periods, repeat = float(sys.argv[1]), int(sys.argv[2])
m, s = MetricField(ScalarField.harmonic()), SymplecticStructure(1)
mu, init = fig1_initial_state(0.1)
horizon = periods * bound_period(phase_from_state(mu, init))
cfg = IntegratorConfig(mu=mu, horizon=horizon, rel_tol=1e-10, abs_tol=1e-14)

t0 = time.perf_counter()
traj = integrate_extended(m, s, cfg, init)   # includes compilation (or cache load)
first = time.perf_counter() - t0
times = []
for _ in range(repeat):
    t0 = time.perf_counter()
    traj = integrate_extended(m, s, cfg, init)
    times.append(time.perf_counter() - t0)
print(json.dumps({
    "numba": NUMBA_ENABLED, "first_call": first, "best": min(times),
    "steps": traj.stats["accepted_steps"], "final": traj.x[-1].tolist() + traj.v[-1].tolist(),
}))
"""


def run_worker(disable, periods, repeat):
    env = dict(os.environ)
    if disable:
        env["SHADOWFLOW_DISABLE_NUMBA"] = "1"
    else:
        env.pop("SHADOWFLOW_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", WORKER, str(periods), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--periods", type=float, default=20.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    fast = run_worker(False, args.periods, args.repeat)
    slow = run_worker(True, args.periods, 1)
    diff = max(abs(a - b) for a, b in zip(fast["final"], slow["final"]))
    print(f"workload: P = 0.1 oscillator, {args.periods:g} periods, {fast['steps']} accepted steps")
    print(f"{'path':<10}{'first call [s]':>16}{'best [s]':>12}")
    for name, res in (("numba", fast), ("python", slow)):
        print(f"{name:<10}{res['first_call']:>16.4f}{res['best']:>12.4f}")
    print(f"speedup (best): {slow['best'] / fast['best']:.1f}x")
    print(f"max |final state difference|: {diff:.3e}")


if __name__ == "__main__":
    main()
