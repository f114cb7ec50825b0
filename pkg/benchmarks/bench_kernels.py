"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_kernels.py [--paths 250] [--repeat 5]

Each kernel is called once per backend before timing, so numba compilation is
excluded. Outputs of the two backends are compared before any timing is done.
The last row times a batch of stochastic Strang steps with the kernels switched
underneath the integrator.
"""
import argparse
import math
import timeit

import numpy as np

from skdv import kernels
from skdv import ApproxParams, Forcing, NoiseOperator, SchemeConfig, SpectralGrid, benchmark_initial, run


def kernel_cases(paths: int, n: int):
    rng = np.random.default_rng(0)
    u = rng.normal(size=(paths, n)) + 1j * rng.normal(size=(paths, n))
    v = rng.normal(size=(paths, n))
    x = rng.uniform(-0.5, 3.0, size=(paths, n))
    return {
        "gaussian_block": lambda k: k["gaussian_block"](12345, np.arange(paths, dtype=np.uint64), 7, 1, 129),
        "cutoff_profile": lambda k: k["cutoff_profile"](x),
        "nonlinear_phase K=inf": lambda k: k["nonlinear_phase"](u, v, 1.0, 1.0, math.inf, 0.005),
        "nonlinear_phase K=2": lambda k: k["nonlinear_phase"](u, v, 1.0, 1.0, 2.0, 0.005),
    }


def best_of(fn, repeat: int) -> float:
    fn()
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def ensemble_step(paths: int):
    grid = SpectralGrid()
    forcing = Forcing(NoiseOperator.from_decay(grid.half_length, channel=1),
                      NoiseOperator.from_decay(grid.half_length, channel=2), seed=1)
    config = SchemeConfig(0.005, 0.05)
    initial = benchmark_initial(grid)
    return lambda: run(grid, initial, ApproxParams(K=2.0), config, forcing, paths=np.arange(paths),
                       diagnostics=None, keep_fields=False)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=250)
    ap.add_argument("--points", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    backends = {name: kernels.implementations(name) for name in ("numpy", "numba")}
    cases = kernel_cases(args.paths, args.points)
    print(f"{'kernel':<24}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, call in cases.items():
        ref, fast = call(backends["numpy"]), call(backends["numba"])
        for a, b in zip(ref if isinstance(ref, tuple) else (ref,), fast if isinstance(fast, tuple) else (fast,)):
            np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-12)
        t = {k: best_of(lambda: call(impl), args.repeat) for k, impl in backends.items()}
        print(f"{name:<24}{t['numpy'] * 1e3:>12.3f}{t['numba'] * 1e3:>12.3f}{t['numpy'] / t['numba']:>9.1f}x")

    step = ensemble_step(args.paths)
    original = kernels.BACKEND
    t = {}
    for name in ("numpy", "numba"):
        kernels.use_backend(name)
        t[name] = best_of(step, 1)
    kernels.use_backend(original)
    label = f"10 steps x {args.paths} paths"
    print(f"{label:<24}{t['numpy'] * 1e3:>12.1f}{t['numba'] * 1e3:>12.1f}{t['numpy'] / t['numba']:>9.1f}x")


if __name__ == "__main__":
    main()
