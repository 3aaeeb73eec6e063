"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or config error, 3 numerical
failure. Diagnostics go to stderr; results are written under ``--out``.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import experiments, io, theory
from .errors import DataError, NumericalError
from .estimate import ScaleToData, calibration_scale, em_fit_binned, em_fit_continuous
from .forecast import rolling_one_step
from .simulate import bin_events, simulate_branching, simulate_thinning

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p, config_required=True):
    if config_required:
        p.add_argument("--config", required=True, type=Path, help="JSON config file")
    p.add_argument("--out", required=True, type=Path, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    p.add_argument("--format", choices=("csv", "json"), default=None, help="tabular output format")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eahawkes", description="Environmentally-adaptive Hawkes processes")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate events from the config's model")
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate A by EM")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--events", type=Path, help="event CSV (time,node)")
    src.add_argument("--counts", type=Path, help="daily counts CSV")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="rolling one-step predictions for a counts CSV")
    _common(p)
    p.add_argument("--counts", required=True, type=Path, help="daily counts CSV")
    p.add_argument("--start", type=int, default=1, help="first predicted bin")
    p.add_argument("--refit", action="store_true", help="fit A by binned EM and rescale it to the data first")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("theory", help="stability, residual-time and cluster-length computations")
    tsub = p.add_subparsers(dest="quantity", required=True, parser_class=_Parser)
    q = tsub.add_parser("stability")
    _common(q)
    q.set_defaults(func=cmd_stability)
    q = tsub.add_parser("residual")
    _common(q)
    q.add_argument("--y", type=float, required=True, help="observation time")
    q.add_argument("--l", type=float, required=True, help="window length")
    q.add_argument("--method", choices=("fixed_point", "closed_form"), default="fixed_point")
    q.add_argument("--replicates", type=int, default=0, help="also run a Monte-Carlo check")
    q.set_defaults(func=cmd_residual)
    q = tsub.add_parser("cluster-length")
    _common(q)
    q.add_argument("--t-max", type=float, default=20.0)
    q.add_argument("--y-max", type=float, default=20.0)
    q.add_argument("--step", type=float, default=0.05, help="grid step in both t and y")
    q.set_defaults(func=cmd_cluster_length)

    p = sub.add_parser("reproduce", help="run a packaged experiment")
    rsub = p.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    q = rsub.add_parser("table1")
    _common(q, config_required=False)
    q.add_argument("--replicates", type=int, default=1)
    q.set_defaults(func=cmd_table1)
    q = rsub.add_parser("forecast-demo")
    _common(q, config_required=False)
    q.add_argument("--replicates", type=int, default=1)
    q.set_defaults(func=cmd_forecast_demo)
    return parser


def _out(args) -> Path:
    args.out.mkdir(parents=True, exist_ok=True)
    return args.out


def _seed(args, default=0):
    return default if args.seed is None else args.seed


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    cfg = io.read_config(args.config)
    if cfg.sim is None:
        raise DataError(f"{args.config}: a 'simulate' section is required")
    sim = cfg.sim if args.seed is None else cfg.sim.replicate(args.seed - cfg.sim.rng_seed)
    if cfg.sim_method == "branching":
        stream, _ = simulate_branching(sim)
    else:
        stream = simulate_thinning(sim)
    out = _out(args)
    if args.format == "json":
        doc = {"times": stream.times, "nodes": stream.nodes, "seed": stream.seed, "horizon": stream.horizon}
        io._write_json(out / "events.json", doc)
    else:
        io.write_events_csv(out / "events.csv", stream)
    print(f"simulated {len(stream)} events", file=sys.stderr)


def cmd_fit(args):
    cfg = io.read_config(args.config)
    if cfg.fit is None:
        raise DataError(f"{args.config}: a 'fit' section is required")
    if args.counts is not None:
        result = em_fit_binned(io.read_counts_csv(args.counts), cfg.fit)
    else:
        stream = io.read_events_csv(args.events, cfg.model.n_nodes)
        if cfg.delta is not None:
            result = em_fit_binned(bin_events(stream, cfg.delta), cfg.fit)
        else:
            result = em_fit_continuous(stream, cfg.fit)
    out = _out(args)
    io.write_outputs({"fit": result}, out)
    if args.format == "csv":
        np.savetxt(out / "a_hat.csv", result.a_hat, delimiter=",", fmt="%.12g")
    print(f"EM finished after {result.iterations} iterations (converged={result.converged})", file=sys.stderr)


def cmd_predict(args):
    cfg = io.read_config(args.config)
    binned = io.read_counts_csv(args.counts)
    model = cfg.model
    results = {}
    if args.refit:
        from .estimate import FitConfig

        fit_cfg = cfg.fit or FitConfig(model.kernel, model.alpha, model.mu, mask=model.a.mask)
        fit = em_fit_binned(binned, fit_cfg)
        scale = calibration_scale(fit.a_hat, ScaleToData(fit_cfg.model(fit.a_hat), binned, start=args.start))
        model = fit_cfg.model(fit.a_hat * scale)
        results["fit"] = {**fit.to_dict(), "scale": scale, "a_calibrated": model.A}
    results["predictions"] = rolling_one_step(model, binned, args.start)
    io.write_outputs(results, _out(args))


def cmd_stability(args):
    cfg = io.read_config(args.config)
    report = theory.stability_check(cfg.model)
    io.write_outputs({"theory": report}, _out(args))
    print(f"sup m = {report.sup_m:.6g}; stable = {report.stable}", file=sys.stderr)


def cmd_residual(args):
    cfg = io.read_config(args.config)
    p = theory.residual_time_survivor(cfg.model, args.y, args.l, method=args.method)
    doc = {"y": args.y, "l": args.l, "method": args.method, "survivor": p}
    if args.replicates > 0:
        mc, se = theory.mc_residual_time(cfg.model, args.y, args.l, args.replicates, _seed(args))
        doc.update(mc_survivor=mc, mc_standard_error=se)
    io.write_outputs({"theory": doc}, _out(args))


def cmd_cluster_length(args):
    cfg = io.read_config(args.config)
    grid = theory.cluster_length_cdf(cfg.model, args.t_max, args.y_max, args.step, args.step)
    out = _out(args)
    io.write_outputs({"theory": grid}, out)
    if args.format == "csv":
        with (out / "cluster_length.csv").open("w", encoding="utf-8") as fh:
            fh.write("t,y,cdf\n")
            for a, t in enumerate(grid.t_grid):
                for j, y in enumerate(grid.y_grid):
                    fh.write(f"{t:.6f},{y:.6f},{grid.d_values[a, j]:.10f}\n")


def cmd_table1(args):
    report = experiments.reproduce_table1(_seed(args), args.replicates)
    out = _out(args)
    (out / "table1.csv").write_text(experiments.table1_csv(report), encoding="utf-8")
    io._write_json(out / "table1.json", report)


def cmd_forecast_demo(args):
    report = experiments.reproduce_forecast_demo(_seed(args), args.replicates)
    out = _out(args)
    ex = report.pop("example")
    io.write_counts_csv(out / "counts.csv", ex["counts"], list(experiments.DEMO_NODES))
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    for (name, beta), res in sorted(ex["fits"].items()):
        tag = f"{name}_beta{beta:g}"
        io.write_predictions_csv(out / f"predictions_{tag}.csv", res["series"])
        series = res["series"]
        for v, node in enumerate(experiments.DEMO_NODES):
            svg = io.svg_chart(series.bins, series.observed[:, v], series.predicted[:, v], f"{node} ({tag})")
            (plots / f"{tag}_node{v}.svg").write_text(svg, encoding="utf-8")
    io._write_json(out / "forecast_summary.json", report)
    for b, w in report["eahdm_wins"].items():
        print(f"beta={b}: decay model has lower RMSE in {w}/{report['replicates']} replicates", file=sys.stderr)


# ---------------------------------------------------------------------------


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
