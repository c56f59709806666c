"""Compare the compiled step loops against the generic python driver.

Usage: python benchmarks/kernel_benchmark.py [--steps N]

Each covered kernel family runs the same short trajectory on both
backends and reports wall time plus the speedup.  Results depend on the
machine; expect one to two orders of magnitude on the scalar-bound loops.
"""

import argparse
import time

import numpy as np

from orbitgauge import kernels
from orbitgauge.dynamics import DynamicsConfig, simulate
from orbitgauge.models import build_model

CASES = [
    ("radial langevin", "radial", {"d": 10},
     dict(eta=1e-3, total_steps=None, beta=10.0, burn_in_fraction=0.1,
          thinning=100)),
    ("hadamard sgd", "l1_hadamard", None,
     dict(eta=2e-3, total_steps=None, noise_mode="minibatch", batch_size=8,
          burn_in_fraction=0.0, thinning=1000)),
    ("masked mf sgd", "rank2_completion", None,
     dict(eta=2e-2, total_steps=None, noise_mode="minibatch", batch_size=16,
          burn_in_fraction=0.0, thinning=1000)),
]


def run_case(label, kind, params, cfg_kwargs, steps):
    model, _ = build_model(kind, params=params, seed=0)
    kwargs = dict(cfg_kwargs)
    kwargs["total_steps"] = steps
    times = {}
    last = {}
    for backend in ("python", "compiled"):
        with kernels.use_backend(backend):
            start = time.perf_counter()
            traj = simulate(model, DynamicsConfig(seed=1, **kwargs))
            times[backend] = time.perf_counter() - start
            last[backend] = traj.snapshots[-1]
    agree = np.allclose(last["python"], last["compiled"], rtol=1e-9, atol=1e-12)
    speedup = times["python"] / times["compiled"]
    print(f"{label:<16} {steps:>8d} steps  "
          f"python {times['python']:7.3f}s  compiled {times['compiled']:7.3f}s  "
          f"speedup {speedup:5.1f}x  final-state match: {'yes' if agree else 'NO'}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=100_000,
                        help="steps per trajectory (default 100000)")
    args = parser.parse_args()

    if not kernels.compiled_available():
        raise SystemExit("compiled extension not importable; build it first "
                         "(pip install -e . --no-build-isolation)")
    for label, kind, params, cfg in CASES:
        run_case(label, kind, params, cfg, args.steps)


if __name__ == "__main__":
    main()
