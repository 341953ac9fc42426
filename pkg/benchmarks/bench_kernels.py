"""Benchmark of the compiled kernels against the pure-Python fallback.

Times the two hot paths on the bundled scenario: the dense eigensolve
sweep behind the stability-surface fit, and the switched RK4 integration
behind the state-space oracle.

    python benchmarks/bench_kernels.py [--lattice N] [--horizon S]
"""

import argparse
import time

import numpy as np

from vppres import VppGain, load_config
from vppres._kernels import pure
from vppres.scenario import bundled_config_path
from vppres.statespace import assemble, equilibrium, phase_matrices

try:
    from vppres._kernels import _core as compiled
except ImportError:
    compiled = None


def bench_eig(impl, matrices, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for a in matrices:
            impl.eigvals(a)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rk4(impl, phases, x0, dt, n_steps, repeat=3):
    args = ([p[0] for p in phases], [p[1] for p in phases], x0, dt, n_steps,
            [0, 2], [0.0006, 0.00066], [1.0, 1.0], 1e3)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        impl.rk4_switched(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--lattice", type=int, default=30)
    parser.add_argument("--horizon", type=float, default=60.0)
    args = parser.parse_args()

    cfg = load_config(bundled_config_path())
    hs = np.linspace(10.6, 30.0, args.lattice)
    ds = np.linspace(12.1, 30.0, args.lattice)
    matrices = [assemble(cfg.grid, cfg.device, VppGain(h, d), cfg.disturbance).a
                for h in hs for d in ds]
    gain = VppGain(15.925, 14.2094)
    model = assemble(cfg.grid, cfg.device, gain, cfg.disturbance)
    x0 = equilibrium(model)
    phases = [phase_matrices(cfg.grid, cfg.device, gain, cfg.disturbance, v, s)
              for v, s in ((False, False), (True, False), (True, True))]
    n_steps = int(args.horizon / 0.001)

    rows = []
    t = bench_eig(pure, matrices)
    rows.append(("eigvals x%d (pure)" % len(matrices), t))
    if compiled is not None:
        tc = bench_eig(compiled, matrices)
        rows.append(("eigvals x%d (compiled)" % len(matrices), tc))
        rows.append(("  speedup", t / tc))
    t = bench_rk4(pure, phases, x0, 0.001, n_steps)
    rows.append(("rk4 %d steps (pure)" % n_steps, t))
    if compiled is not None:
        tc = bench_rk4(compiled, phases, x0, 0.001, n_steps)
        rows.append(("rk4 %d steps (compiled)" % n_steps, tc))
        rows.append(("  speedup", t / tc))
    if compiled is None:
        rows.append(("compiled backend", "not built"))

    width = max(len(r[0]) for r in rows)
    for name, value in rows:
        if isinstance(value, float):
            unit = "x" if name.strip() == "speedup" else " s"
            print(f"{name:<{width}}  {value:8.3f}{unit}")
        else:
            print(f"{name:<{width}}  {value}")


if __name__ == "__main__":
    main()
