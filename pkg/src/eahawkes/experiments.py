"""End-to-end experiment protocols behind ``eahawkes reproduce``.

``table1``: three 3-node networks with ``beta = 0.5``, ``mu = 0`` and two
seed events per node on the first day (7 am and 2 pm), simulated for 8
days, binned at ``delta = 0.1`` and fitted with the known skeleton; the
estimates are rescaled so that ``A[1, 0] = 1.5``.

``forecast-demo``: a synthetic 4-node, 27-day epidemic generated with the
epidemic-control decay, fitted once with a static Hawkes model
(``d = 1``) and once with the decay, at two kernel rates, then compared
by rolling one-step RMSE.
"""

from __future__ import annotations

import datetime as dt
import warnings

import numpy as np

from .core import BinnedCounts, Constant, ModelSpec, ScalarDecay, epidemic_control_decay
from .estimate import FitConfig, Pin, ScaleToData, calibrate, calibration_scale, em_fit_binned
from .forecast import rolling_one_step
from .simulate import SimConfig, bin_events, simulate_thinning

# (A[0,1], A[1,0], A[2,1]) per simulation
TABLE1_PARAMS = ((1.5, 1.5, 1.5), (1.8, 1.5, 1.2), (2.0, 1.5, 1.0))
TABLE1_ENTRIES = ((0, 1), (1, 0), (2, 1))
TABLE1_BETA = 0.5
TABLE1_HORIZON = 8.0
TABLE1_DELTA = 0.1
TABLE1_PIN = Pin((1, 0), 1.5)
TABLE1_SEEDS = tuple((t, v) for v in range(3) for t in (7 / 24, 14 / 24))


def table1_mask() -> np.ndarray:
    mask = np.zeros((3, 3), dtype=bool)
    for e in TABLE1_ENTRIES:
        mask[e] = True
    return mask


def table1_model(k: int, multiplier=None) -> ModelSpec:
    """Generator for simulation ``k`` (0-based); ``multiplier`` defaults to ``alpha = 1``."""
    A = np.zeros((3, 3))
    for e, v in zip(TABLE1_ENTRIES, TABLE1_PARAMS[k]):
        A[e] = v
    return ModelSpec.build([0.0, 0.0, 0.0], A, TABLE1_BETA, multiplier or Constant(1.0), table1_mask())


def table1_stream(k: int, seed: int):
    cfg = SimConfig(table1_model(k), TABLE1_HORIZON, TABLE1_SEEDS, rng_seed=1000 * k + seed)
    with warnings.catch_warnings():
        # the generators are supercritical by design; 8 days keeps them finite
        warnings.simplefilter("ignore", RuntimeWarning)
        return simulate_thinning(cfg)


def table1_fit(stream, delta: float = TABLE1_DELTA):
    cfg = FitConfig.build([0.0, 0.0, 0.0], TABLE1_BETA, mask=table1_mask())
    return em_fit_binned(bin_events(stream, delta), cfg)


def reproduce_table1(seed: int = 0, replicates: int = 1, deltas=(0.05, 0.1, 0.2)) -> dict:
    """Run the three simulations for seeds ``seed .. seed + replicates - 1``.

    Returns per-simulation true values, calibrated estimates (median over
    replicates and every replicate), EM iteration counts and, for each bin
    size in ``deltas``, the ratios ``A[0,1]/A[1,0]`` and ``A[2,1]/A[1,0]``.
    """
    sims = []
    for k in range(len(TABLE1_PARAMS)):
        est, iters, events, ratios, traces = [], [], [], {d: [] for d in deltas}, []
        for r in range(replicates):
            stream = table1_stream(k, seed + r)
            events.append(len(stream))
            fit = table1_fit(stream)
            iters.append(fit.iterations)
            traces.append(fit.lower_bound_trace)
            a = calibrate(fit.a_hat, TABLE1_PIN).a
            est.append([a[e] for e in TABLE1_ENTRIES])
            for d in deltas:
                ah = fit.a_hat if d == TABLE1_DELTA else table1_fit(stream, d).a_hat
                ratios[d].append((ah[0, 1] / ah[1, 0], ah[2, 1] / ah[1, 0]))
        est = np.array(est)
        sims.append(
            {
                "simulation": k + 1,
                "true": list(TABLE1_PARAMS[k]),
                "estimate": np.median(est, axis=0).tolist(),
                "estimates": est.tolist(),
                "iterations": iters,
                "events": events,
                "ratios": {f"{d:g}": np.array(ratios[d]).tolist() for d in deltas},
                "bound_traces": [list(t) for t in traces],
            }
        )
    return {"seed": seed, "replicates": replicates, "delta": TABLE1_DELTA, "simulations": sims}


def table1_csv(report: dict) -> str:
    lines = ["row,A12,A21,A32"]
    for sim in report["simulations"]:
        k = sim["simulation"]
        lines.append(f"Simulation {k} True Parameter," + ",".join(f"{v:.3f}" for v in sim["true"]))
        lines.append(f"Simulation {k} Estimate," + ",".join(f"{v:.3f}" for v in sim["estimate"]))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# forecast demo
# ---------------------------------------------------------------------------

DEMO_NODES = ("hub", "south", "east", "central")
DEMO_DAYS = 27
DEMO_START = dt.date(2020, 1, 16)
DEMO_GEN_BETA = 0.5
DEMO_FIT_BETAS = (0.5, 0.1)
DEMO_LATE_BIN = 18
# hub drives itself and seeds the other three, which then grow locally
DEMO_A = np.array(
    [
        [60.0, 0.0, 0.0, 0.0],
        [6.0, 45.0, 0.0, 0.0],
        [4.0, 0.0, 45.0, 0.0],
        [3.0, 0.0, 0.0, 40.0],
    ]
)
DEMO_SEEDS = tuple((0.1 * k + 0.05, v) for v in range(4) for k in range(3))


def demo_generator() -> ModelSpec:
    return ModelSpec.build(np.zeros(4), DEMO_A, DEMO_GEN_BETA, ScalarDecay(epidemic_control_decay()), DEMO_A > 0)


def demo_counts(seed: int) -> BinnedCounts:
    with warnings.catch_warnings():
        # early growth is supercritical by design; the decay ends it
        warnings.simplefilter("ignore", RuntimeWarning)
        stream = simulate_thinning(SimConfig(demo_generator(), float(DEMO_DAYS), DEMO_SEEDS, rng_seed=seed))
    b = bin_events(stream, 1.0, n_bins=DEMO_DAYS)
    labels = tuple((DEMO_START + dt.timedelta(days=i)).isoformat() for i in range(DEMO_DAYS))
    return BinnedCounts(1.0, b.counts, 0.0, b.seed_counts, labels)


def fit_and_forecast(binned: BinnedCounts, beta: float, multiplier, mask) -> dict:
    """Binned EM, scale calibration on one-step RMSE, then rolling predictions."""
    cfg = FitConfig.build(np.zeros(binned.n_nodes), beta, decay=multiplier, mask=mask)
    fit = em_fit_binned(binned, cfg)
    scale = calibration_scale(fit.a_hat, ScaleToData(cfg.model(fit.a_hat), binned))
    model = cfg.model(fit.a_hat * scale)
    series = rolling_one_step(model, binned, 1)
    err = series.predicted - series.observed
    return {
        "fit": fit,
        "scale": scale,
        "a_calibrated": model.A,
        "series": series,
        "rmse": float(np.sqrt(np.mean(err**2))),
        "rmse_late": float(np.sqrt(np.mean(err[series.bins >= DEMO_LATE_BIN] ** 2))),
        "late_bias": float(np.mean(err[series.bins >= DEMO_LATE_BIN])),
    }


def reproduce_forecast_demo(seed: int = 0, replicates: int = 1) -> dict:
    """Static Hawkes vs decay model on ``replicates`` synthetic datasets.

    The fits share the generator's skeleton; ``mu = 0`` as in the generator.
    The first replicate's series are kept for plotting.
    """
    mask = DEMO_A > 0
    models = {"hawkes": Constant(1.0), "eahdm": ScalarDecay(epidemic_control_decay())}
    runs = []
    first = None
    for r in range(replicates):
        binned = demo_counts(seed + r)
        per = {}
        for beta in DEMO_FIT_BETAS:
            for name, alpha in models.items():
                per[(name, beta)] = fit_and_forecast(binned, beta, alpha, mask)
        if first is None:
            first = (binned, per)
        runs.append(
            {
                f"{name}_beta{beta:g}": {k: per[(name, beta)][k] for k in ("rmse", "rmse_late", "late_bias", "scale")}
                for name, beta in per
            }
        )
    wins = {
        f"{b:g}": int(sum(run[f"eahdm_beta{b:g}"]["rmse"] < run[f"hawkes_beta{b:g}"]["rmse"] for run in runs))
        for b in DEMO_FIT_BETAS
    }
    return {
        "seed": seed,
        "replicates": replicates,
        "late_from_bin": DEMO_LATE_BIN,
        "runs": runs,
        "eahdm_wins": wins,
        "example": {"counts": first[0], "fits": first[1]},
    }
