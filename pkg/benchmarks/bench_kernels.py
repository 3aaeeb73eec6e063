"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each workload runs under both backends with the same seed and the outputs
are checked for agreement before timings are reported.
"""

import argparse
import time

import numpy as np

from eahawkes import HAVE_COMPILED, ModelSpec, ScalarDecay, epidemic_control_decay, use_backend
from eahawkes import _backend
from eahawkes.simulate import SimConfig, simulate_branching, simulate_thinning
from eahawkes.theory import cluster_length_cdf


# built once so the cached stability check is not part of the timings
HAWKES = ModelSpec.build([1.0, 0.5], [[0.4, 0.3], [0.2, 0.5]], 1.0)
DECAY = ModelSpec.build([5.0, 3.0], [[20.0, 3.0], [3.0, 18.0]], 0.5, ScalarDecay(epidemic_control_decay()))


def thinning():
    return simulate_thinning(SimConfig(HAWKES, 5000.0, rng_seed=1)).times


def thinning_decay():
    return simulate_thinning(SimConfig(DECAY, 1000.0, ((0.1, 0), (0.2, 1)), rng_seed=2)).times


def branching():
    return simulate_branching(SimConfig(DECAY, 1000.0, ((0.1, 0), (0.2, 1)), rng_seed=3))[0].times


def excitation():
    rng = np.random.default_rng(4)
    n, m = 20_000, 3
    times = np.cumsum(rng.exponential(0.05, n))
    nodes = rng.integers(0, m, n)
    return _backend.kernels.excitation_at_events(times, nodes, rng.uniform(0.5, 2.0, (m, m)), m)


def picard():
    model = ModelSpec.build([1.0], [[10.0]], 0.5, ScalarDecay(epidemic_control_decay()))
    return cluster_length_cdf(model, t_max=5.0, y_max=5.0, h_t=0.05, h_y=0.05).d_values


WORKLOADS = [thinning, thinning_decay, branching, excitation, picard]


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3, help="runs per workload; the best time is kept")
    args = parser.parse_args()
    if not HAVE_COMPILED:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation` first")

    simulate_thinning(SimConfig(DECAY, 1.0))
    print(f"{'workload':<16}{'python s':>11}{'compiled s':>12}{'speedup':>10}  agree")
    for fn in WORKLOADS:
        use_backend("python")
        t_py, out_py = _time(fn, args.repeat)
        use_backend("compiled")
        t_c, out_c = _time(fn, args.repeat)
        agree = np.array_equal(out_py, out_c) or np.allclose(out_py, out_c, rtol=0, atol=1e-13)
        print(f"{fn.__name__:<16}{t_py:>11.4f}{t_c:>12.4f}{t_py / t_c:>9.1f}x  {agree}")


if __name__ == "__main__":
    main()
