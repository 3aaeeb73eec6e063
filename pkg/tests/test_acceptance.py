"""Acceptance criteria, each run at its stated tolerance.

Every test prints one ``C<k> PASS|FAIL`` line with the measured numbers;
the lines are repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from eahawkes import DecaySpec, EventStream, MatrixFunction, ModelSpec, ScalarDecay, epidemic_control_decay
from eahawkes.errors import ConfigError, ExplosionError
from eahawkes.estimate import FitConfig, em_fit_continuous
from eahawkes.experiments import reproduce_forecast_demo, reproduce_table1
from eahawkes.simulate import SimConfig, bin_events, simulate_branching, simulate_replicates, simulate_thinning
from eahawkes.theory import (
    cluster_length_cdf,
    mc_cluster_length,
    mc_mean_intensity,
    mc_residual_time,
    mean_first_generation,
    residual_time_survivor,
    stability_check,
)
from eahawkes import eval_intensity

from conftest import ACCEPTANCE_LINES, random_history
from oracles import hawkes_em, hawkes_intensity

pytestmark = pytest.mark.slow


@pytest.fixture
def verdict(capsys):
    def record(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return record


@pytest.fixture(scope="module")
def table1():
    t0 = time.perf_counter()
    report = reproduce_table1(seed=0, replicates=20)
    return report, time.perf_counter() - t0


def test_c1_table1_recovery(table1, verdict):
    report, elapsed = table1
    worst = 0.0
    parts = []
    for sim in report["simulations"]:
        true, est = np.array(sim["true"]), np.array(sim["estimate"])
        # A12 and A32; A21 is the pinned entry
        err = np.abs(est - true)[[0, 2]]
        worst = max(worst, float(err.max()))
        parts.append(f"sim{sim['simulation']} median ({est[0]:.3f}, {est[1]:.3f}, {est[2]:.3f})")
    ok = worst <= 0.2 and elapsed < 300
    verdict("C1", ok, f"max |median - true| = {worst:.4f} (tol 0.2), {elapsed:.1f}s for 20 seeds; " + "; ".join(parts))


def test_c2_bound_monotone_and_fast(table1, verdict):
    report, _ = table1
    worst_drop = 0.0
    max_iter = 0
    for sim in report["simulations"]:
        max_iter = max(max_iter, max(sim["iterations"]))
        for trace in sim["bound_traces"]:
            tr = np.array(trace)
            if tr.size > 1:
                drop = np.max((tr[:-1] - tr[1:]) / np.maximum(1.0, np.abs(tr[:-1])))
                worst_drop = max(worst_drop, float(drop))
    # every other fit in the suite checks the same condition inside the EM loop
    ok = worst_drop <= 1e-9 and max_iter <= 50
    verdict("C2", ok, f"largest relative bound decrease {worst_drop:.2e} (tol 1e-9), max iterations {max_iter} (tol 50)")


def test_c3_hawkes_reduction(verdict):
    rng = np.random.default_rng(2024)
    worst_lam = worst_a = 0.0
    for k in range(5):
        m = 1 + k % 3
        n = 120 + 20 * k
        horizon = 30.0
        times, nodes = random_history(rng, m, n, horizon)
        mu = rng.uniform(0.2, 1.0, m)
        A = rng.uniform(0.0, 0.8, (m, m))
        beta = rng.uniform(0.5, 2.0, (m, m))
        model = ModelSpec.build(mu, A, beta)
        s = EventStream(times, nodes, m, horizon)
        for t in np.linspace(0.5, horizon, 25):
            got = eval_intensity(model, s.before(t), t)
            ref = hawkes_intensity(mu, A, beta, times.tolist(), nodes.tolist(), t)
            worst_lam = max(worst_lam, float(np.max(np.abs(got - ref))))
        iters = 20
        fit = em_fit_continuous(s, FitConfig.build(mu, beta, max_iters=iters, tol=1e-300))
        ref_a = hawkes_em(mu, beta.tolist(), times.tolist(), nodes.tolist(), horizon, np.ones((m, m)).tolist(), iters)
        worst_a = max(worst_a, float(np.max(np.abs(fit.a_hat - np.array(ref_a)))))
    ok = worst_lam < 1e-8 and worst_a < 1e-8
    verdict("C3", ok, f"max intensity diff {worst_lam:.1e}, max EM diff {worst_a:.1e} (tol 1e-8)")


def _c4_models():
    d = epidemic_control_decay()
    one = DecaySpec.constant(1.0)
    t1 = np.zeros((3, 3))
    t1[0, 1] = t1[1, 0] = t1[2, 1] = 20.0
    return [
        ("hawkes-1d", SimConfig(ModelSpec.build([1.0], [[0.5]], 1.0), 20.0, rng_seed=0)),
        ("hawkes-2d", SimConfig(ModelSpec.build([0.3, 0.6], [[0.4, 0.3], [0.2, 0.5]], [[1.0, 2.0], [1.5, 0.8]]), 20.0, rng_seed=0)),
        ("decay-1d", SimConfig(ModelSpec.build([0.5], [[15.0]], 0.5, ScalarDecay(d)), 30.0, ((0.2, 0), (0.4, 0)), rng_seed=0)),
        (
            "decay-3d-skeleton",
            SimConfig(ModelSpec.build(np.zeros(3), t1, 0.5, ScalarDecay(d), t1 > 0), 15.0, tuple((t, v) for v in range(3) for t in (7 / 24, 14 / 24)), rng_seed=0),
        ),
        (
            "matrix-2d",
            SimConfig(ModelSpec.build([0.4, 0.4], [[0.4, 10.0], [10.0, 0.3]], 1.0, MatrixFunction(((one, d), (d, one)))), 12.0, rng_seed=0),
        ),
    ]


def test_c4_simulator_equivalence(verdict):
    t0 = time.perf_counter()
    n = 2000
    worst = 0.0
    parts = []
    for name, cfg in _c4_models():
        per_method = []
        for method, offset in (("thinning", 0), ("branching", 10**6)):
            reps = simulate_replicates(cfg.replicate(offset), n, method)
            nb = int(math.ceil(cfg.horizon))
            per_method.append(np.stack([bin_events(s, 1.0, n_bins=nb).counts - bin_events(s, 1.0, n_bins=nb).seed_counts for s in reps]))
        a, b = per_method
        se = np.sqrt(a.var(axis=0, ddof=1) / n + b.var(axis=0, ddof=1) / n)
        diff = np.abs(a.mean(axis=0) - b.mean(axis=0))
        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, 0.0))
        worst = max(worst, float(z.max()))
        parts.append(f"{name} max z {z.max():.2f}")
    elapsed = time.perf_counter() - t0
    ok = worst < 4.0 and elapsed < 600
    verdict("C4", ok, f"max |mean diff| / SE = {worst:.2f} (tol 4) over 5 models x {n} replicates, {elapsed:.1f}s; " + "; ".join(parts))


def test_c5_residual_time(verdict):
    model = ModelSpec.build([1.0], [[0.5]], 1.0)
    exact = residual_time_survivor(model, 50.0, 1.0)
    closed = residual_time_survivor(model, 50.0, 1.0, method="closed_form")
    mc, se = mc_residual_time(model, 50.0, 1.0, replicates=100_000, rng_seed=1)
    poisson = ModelSpec.build([1.3], [[0.0]], 1.0)
    pois_err = max(abs(residual_time_survivor(poisson, 7.0, l) - math.exp(-1.3 * l)) for l in (0.25, 1.0, 3.0))
    ok = abs(exact - mc) <= 0.01 and pois_err == 0.0
    verdict(
        "C5",
        ok,
        f"fixed point {exact:.4f} vs MC {mc:.4f} +- {se:.4f} (tol 0.01); "
        f"closed form {closed:.4f} (off by {abs(closed - mc):.4f}); alpha=0 error {pois_err:.1e}",
    )


def test_c6_cluster_length(verdict):
    cases = [
        ("hawkes", ModelSpec.build([1.0], [[0.5]], 1.0), (0.0,)),
        ("decay", ModelSpec.build([1.0], [[12.0]], 0.5, ScalarDecay(epidemic_control_decay())), (0.0, 5.0, 10.0)),
    ]
    worst = worst_zero = 0.0
    parts = []
    for name, model, roots in cases:
        grid = cluster_length_cdf(model, t_max=10.0, y_max=20.0, h_t=0.05, h_y=0.05)
        y_idx = np.arange(0, grid.y_grid.size, 10)
        for t in roots:
            a = int(round(t / 0.05))
            emp = mc_cluster_length(model, t, grid.y_grid[y_idx], replicates=100_000, rng_seed=17 + a)
            err = float(np.max(np.abs(grid.d_values[a, y_idx] - emp)))
            worst = max(worst, err)
            parts.append(f"{name} t={t:g}: {err:.4f}")
        m_t = np.array([mean_first_generation(model, t) for t in grid.t_grid])
        worst_zero = max(worst_zero, float(np.max(np.abs(grid.d_values[:, 0] - np.exp(-m_t)) / np.exp(-m_t))))
    ok = worst <= 0.02 and worst_zero <= 1e-8
    verdict("C6", ok, f"sup |D - MC| = {worst:.4f} (tol 0.02), D(t,0) rel err {worst_zero:.1e}; " + "; ".join(parts))


def test_c7_intensity_bound(verdict):
    d = epidemic_control_decay()
    models = [
        ("hawkes-1d", ModelSpec.build([0.5], [[0.6]], 1.0)),
        ("hawkes-2d", ModelSpec.build([0.4, 0.2], [[0.3, 0.4], [0.2, 0.5]], 1.0)),
        ("decay-1d", ModelSpec.build([1.0], [[20.0]], 0.5, ScalarDecay(d))),
    ]
    slack = math.inf
    parts = []
    for k, (name, model) in enumerate(models):
        rep = stability_check(model)
        mean, se = mc_mean_intensity(model, 100.0, replicates=1000, rng_seed=100 * k)
        gap = float(np.min(rep.intensity_bound + 3 * se - mean))
        slack = min(slack, gap)
        parts.append(f"{name} max rate {mean.max():.3f} <= bound {rep.intensity_bound:.3f}")
    unstable = SimConfig(ModelSpec.build([1.0], [[1.5]], 1.0), 1000.0, rng_seed=0)
    exploded = rejected = False
    with pytest.warns(RuntimeWarning, match="not subcritical"):
        try:
            simulate_thinning(unstable)
        except ExplosionError:
            exploded = True
    try:
        simulate_branching(unstable)
    except ConfigError:
        rejected = True
    ok = slack >= 0 and exploded and rejected
    verdict("C7", ok, "; ".join(parts) + f"; unstable model: thinning hit the 10^6 cap = {exploded}, branching refused = {rejected}")


def test_c8_forecast_ordering(verdict):
    report = reproduce_forecast_demo(seed=0, replicates=10)
    wins = report["eahdm_wins"]
    bias = {b: [run[f"hawkes_beta{b}"]["late_bias"] for run in report["runs"]] for b in ("0.5", "0.1")}
    ok = all(w >= 8 for w in wins.values()) and all(np.mean(v) > 0 for v in bias.values())
    detail = ", ".join(f"beta={b}: {wins[b]}/10 wins, mean Hawkes late bias {np.mean(bias[b]):+.2f}" for b in ("0.5", "0.1"))
    verdict("C8", ok, detail)


def test_c9_ratio_robustness(table1, verdict):
    report, _ = table1
    worst = 0.0
    for sim in report["simulations"]:
        r = {d: np.median(np.array(v), axis=0) for d, v in sim["ratios"].items()}
        for d in ("0.05", "0.2"):
            worst = max(worst, float(np.max(np.abs(r[d] / r["0.1"] - 1))))
    verdict("C9", worst <= 0.15, f"max relative change of median ratios across delta = {worst:.4f} (tol 0.15)")
