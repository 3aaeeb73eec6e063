"""File formats: count and event CSVs, JSON configs, and result bundles.

Configs are JSON documents with sections ``model``, ``fit`` and
``simulate`` validated against :data:`CONFIG_SCHEMA` (unknown keys are
rejected). Infinite piece bounds are written as the string ``"inf"``.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .core import (
    FORM_CODES,
    BinnedCounts,
    Constant,
    DecayPiece,
    DecaySpec,
    EventStream,
    MatrixFunction,
    ModelSpec,
    ScalarDecay,
    epidemic_control_decay,
    nudge_ties_forward,
)
from .errors import ConfigError, ParseError

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM, "minItems": 1}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}
_BOUND = {"anyOf": [_NUM, {"const": "inf"}]}
_PIECE = {
    "type": "object",
    "properties": {
        "upto": _BOUND,
        "form": {"enum": sorted(FORM_CODES)},
        "c": _NUM,
        "a": _NUM,
        "p": _NUM,
        "q": _NUM,
    },
    "required": ["upto", "form"],
    "additionalProperties": False,
}
_PIECES = {"type": "array", "items": _PIECE, "minItems": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "model": {
            "type": "object",
            "properties": {
                "mu": _VEC,
                "a": _MAT,
                "mask": {"type": "array", "items": {"type": "array", "items": {"type": "boolean"}}},
                "beta": {"anyOf": [_NUM, _MAT]},
                "multiplier": {
                    "oneOf": [
                        {
                            "type": "object",
                            "properties": {"type": {"const": "constant"}, "value": _NUM},
                            "required": ["type"],
                            "additionalProperties": False,
                        },
                        {
                            "type": "object",
                            "properties": {"type": {"const": "epidemic_control"}},
                            "required": ["type"],
                            "additionalProperties": False,
                        },
                        {
                            "type": "object",
                            "properties": {"type": {"const": "scalar_decay"}, "pieces": _PIECES},
                            "required": ["type", "pieces"],
                            "additionalProperties": False,
                        },
                        {
                            "type": "object",
                            "properties": {
                                "type": {"const": "matrix"},
                                "entries": {"type": "array", "items": {"type": "array", "items": _PIECES}},
                                "envelope": _MAT,
                            },
                            "required": ["type", "entries"],
                            "additionalProperties": False,
                        },
                    ]
                },
            },
            "required": ["mu", "a", "beta"],
            "additionalProperties": False,
        },
        "fit": {
            "type": "object",
            "properties": {
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "init_a": _MAT,
                "horizon": _NUM,
                "compensator": {"enum": ["paper", "exact"]},
            },
            "additionalProperties": False,
        },
        "simulate": {
            "type": "object",
            "properties": {
                "horizon": {"type": "number", "exclusiveMinimum": 0},
                "seeds": {
                    "type": "array",
                    "items": {"type": "array", "prefixItems": [_NUM, {"type": "integer"}], "minItems": 2, "maxItems": 2},
                },
                "rng_seed": {"type": "integer"},
                "method": {"enum": ["thinning", "branching"]},
            },
            "required": ["horizon"],
            "additionalProperties": False,
        },
    },
    "required": ["model"],
    "additionalProperties": False,
}


# ---------------------------------------------------------------------------
# CSV data
# ---------------------------------------------------------------------------


def _rows(path):
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=path) from exc


def read_counts_csv(path) -> BinnedCounts:
    """Daily counts: a ``date`` column (ISO-8601) followed by one column per node.

    Dates must be contiguous and ascending. The result has ``delta = 1`` and
    the dates as bin labels; node order follows the column order.
    """
    rows = _rows(path)
    if not rows:
        raise ParseError("empty file; expected a header row", line=1, path=path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise ParseError("header must be 'date' followed by one column per node", line=1, path=path)
    width = len(header)
    dates, counts = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", line=lineno, path=path)
        try:
            day = dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise ParseError(f"bad date {row[0]!r}", line=lineno, path=path) from None
        if dates and day != dates[-1] + dt.timedelta(days=1):
            raise ParseError(f"date {day} does not follow {dates[-1]}", line=lineno, path=path)
        vals = []
        for cell in row[1:]:
            try:
                v = int(cell.strip())
            except ValueError:
                raise ParseError(f"count {cell!r} is not an integer", line=lineno, path=path) from None
            if v < 0:
                raise ParseError(f"negative count {v}", line=lineno, path=path)
            vals.append(v)
        dates.append(day)
        counts.append(vals)
    if not counts:
        raise ParseError("no data rows", line=len(rows), path=path)
    return BinnedCounts(1.0, np.array(counts, dtype=np.int64), 0.0, labels=tuple(d.isoformat() for d in dates))


def write_counts_csv(path, binned: BinnedCounts, node_names=None):
    names = node_names or [f"node{k}" for k in range(binned.n_nodes)]
    labels = binned.labels or tuple(str(i) for i in range(binned.n_bins))
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *names])
        for lab, row in zip(labels, binned.counts):
            w.writerow([lab, *(int(x) for x in row)])


def read_events_csv(path, n_nodes: int | None = None) -> EventStream:
    """Events with header ``time,node``; exact duplicate times are nudged by 1e-9 days."""
    rows = _rows(path)
    if not rows:
        raise ParseError("empty file; expected header 'time,node'", line=1, path=path)
    if [h.strip() for h in rows[0]] != ["time", "node"]:
        raise ParseError("header must be 'time,node'", line=1, path=path)
    times, nodes = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"expected 2 fields, got {len(row)}", line=lineno, path=path)
        try:
            t = float(row[0])
            v = int(row[1])
        except ValueError:
            raise ParseError(f"cannot parse {row!r}", line=lineno, path=path) from None
        if not (math.isfinite(t) and t >= 0):
            raise ParseError(f"event time {t} must be finite and >= 0", line=lineno, path=path)
        if v < 0 or (n_nodes is not None and v >= n_nodes):
            raise ParseError(f"node {v} out of range", line=lineno, path=path)
        times.append(t)
        nodes.append(v)
    m = n_nodes if n_nodes is not None else (max(nodes) + 1 if nodes else 1)
    order = sorted(range(len(times)), key=lambda k: (times[k], nodes[k]))
    t_sorted = np.array([times[k] for k in order], dtype=float)
    fixed = nudge_ties_forward(t_sorted)
    if np.any(fixed != t_sorted):
        warnings.warn(f"{path}: {int(np.sum(fixed != t_sorted))} tied event times nudged by 1e-9 days", stacklevel=2)
    return EventStream(fixed, np.array([nodes[k] for k in order], dtype=np.int64), m, fixed[-1] if len(fixed) else 0.0)


def write_events_csv(path, stream: EventStream):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("time,node\n")
        for t, v in zip(stream.times, stream.nodes):
            fh.write(f"{t:.9f},{int(v)}\n")


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Parsed config document. ``fit`` and ``sim`` are ``None`` when the section is absent."""

    model: ModelSpec
    fit: object | None = None
    sim: object | None = None
    delta: float | None = None
    sim_method: str = "thinning"


def _bound(x):
    return math.inf if x == "inf" else float(x)


def _decay_from_json(pieces, where):
    try:
        return DecaySpec(
            tuple(
                DecayPiece(_bound(p["upto"]), p["form"], p.get("c", 1.0), p.get("a", 0.0), p.get("p", 0.0), p.get("q", 0.0))
                for p in pieces
            )
        )
    except ConfigError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _decay_to_json(spec: DecaySpec):
    return [
        {"upto": "inf" if math.isinf(p.upto) else p.upto, "form": p.form, "c": p.c, "a": p.a, "p": p.p, "q": p.q}
        for p in spec.pieces
    ]


def _multiplier_from_json(doc):
    if doc is None:
        return Constant(1.0)
    kind = doc["type"]
    if kind == "constant":
        return Constant(doc.get("value", 1.0))
    if kind == "epidemic_control":
        return ScalarDecay(epidemic_control_decay())
    if kind == "scalar_decay":
        spec = _decay_from_json(doc["pieces"], "model.multiplier.pieces")
        try:
            return ScalarDecay(spec)
        except ConfigError as exc:
            raise ConfigError(f"model.multiplier.pieces: {exc}") from None
    entries = tuple(
        tuple(_decay_from_json(p, f"model.multiplier.entries[{i}][{j}]") for j, p in enumerate(row))
        for i, row in enumerate(doc["entries"])
    )
    env = doc.get("envelope")
    return MatrixFunction(entries, None if env is None else np.array(env, dtype=float))


def _multiplier_to_json(alpha):
    if isinstance(alpha, Constant):
        return {"type": "constant", "value": alpha.value}
    if isinstance(alpha, ScalarDecay):
        return {"type": "scalar_decay", "pieces": _decay_to_json(alpha.decay)}
    out = {"type": "matrix", "entries": [[_decay_to_json(s) for s in row] for row in alpha.entries]}
    if alpha.envelope is not None:
        out["envelope"] = alpha.envelope.tolist()
    return out


def config_from_dict(doc, source="config") -> RunConfig:
    """Validate and build a :class:`RunConfig` from a parsed JSON document."""
    from .estimate import FitConfig
    from .simulate import SimConfig

    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{source}: {path}: {exc.message}") from None
    md = doc["model"]
    try:
        model = ModelSpec.build(md["mu"], md["a"], md["beta"], _multiplier_from_json(md.get("multiplier")), md.get("mask"))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}: model: {exc}") from None
    fit = delta = sim = None
    method = "thinning"
    if "fit" in doc:
        fd = doc["fit"]
        delta = fd.get("delta")
        try:
            fit = FitConfig(
                model.kernel,
                model.alpha,
                model.mu,
                mask=model.a.mask,
                init_a=fd.get("init_a"),
                max_iters=fd.get("max_iters", 500),
                tol=fd.get("tol", 1e-6),
                horizon=fd.get("horizon"),
                compensator=fd.get("compensator", "paper"),
            )
        except ConfigError as exc:
            raise ConfigError(f"{source}: fit: {exc}") from None
    if "simulate" in doc:
        sd = doc["simulate"]
        method = sd.get("method", "thinning")
        try:
            sim = SimConfig(model, sd["horizon"], tuple((t, v) for t, v in sd.get("seeds", [])), sd.get("rng_seed", 0))
        except ConfigError as exc:
            raise ConfigError(f"{source}: simulate: {exc}") from None
    return RunConfig(model, fit, sim, delta, method)


def read_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=path) from None
    return config_from_dict(doc, str(path))


def read_model_config(path):
    """``(ModelSpec, FitConfig or None, SimConfig or None)`` from a JSON config."""
    cfg = read_config(path)
    return cfg.model, cfg.fit, cfg.sim


def config_to_dict(model: ModelSpec, fit=None, sim=None, delta=None, sim_method=None) -> dict:
    doc = {
        "model": {
            "mu": model.mu.tolist(),
            "a": model.A.tolist(),
            "mask": model.a.mask.tolist(),
            "beta": model.beta.tolist(),
            "multiplier": _multiplier_to_json(model.alpha),
        }
    }
    if fit is not None or delta is not None:
        fd = {}
        if fit is not None:
            fd.update(tol=fit.tol, max_iters=fit.max_iters, init_a=fit.init_a.tolist(), compensator=fit.compensator)
            if fit.horizon is not None:
                fd["horizon"] = fit.horizon
        if delta is not None:
            fd["delta"] = delta
        doc["fit"] = fd
    if sim is not None:
        doc["simulate"] = {
            "horizon": sim.horizon,
            "seeds": [[t, v] for t, v in sim.seeds],
            "rng_seed": sim.rng_seed,
        }
        if sim_method is not None:
            doc["simulate"]["method"] = sim_method
    return doc


def write_model_config(path, model: ModelSpec, fit=None, sim=None, delta=None, sim_method=None):
    _write_json(path, config_to_dict(model, fit, sim, delta, sim_method))


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    return x


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_predictions_csv(path, series):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("bin,node,predicted,observed\n")
        for k, b in enumerate(series.bins):
            for v in range(series.predicted.shape[1]):
                obs = "" if series.observed is None else f"{series.observed[k, v]:.6f}"
                fh.write(f"{int(b)},{v},{series.predicted[k, v]:.6f},{obs}\n")


def _polyline(xs, ys, x0, x1, y0, y1, box):
    left, top, width, height = box
    span_x = (x1 - x0) or 1.0
    span_y = (y1 - y0) or 1.0
    pts = (
        f"{left + (x - x0) / span_x * width:.2f},{top + height - (y - y0) / span_y * height:.2f}"
        for x, y in zip(xs, ys)
    )
    return " ".join(pts)


def svg_chart(bins, observed, predicted, title="") -> str:
    """Line chart: observed solid black, predicted dashed red, fixed 800x400 viewBox."""
    box = (60.0, 30.0, 710.0, 320.0)
    xs = np.asarray(bins, dtype=float)
    series = [s for s in (observed, predicted) if s is not None]
    y1 = max(float(np.max(s)) for s in series) if series else 1.0
    y1 = y1 if y1 > 0 else 1.0
    x0, x1 = float(xs.min()), float(xs.max())
    left, top, width, height = box
    out = [
        '<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 400" width="800" height="400">',
        '<rect x="0" y="0" width="800" height="400" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{width}" height="{height}" fill="none" stroke="#888" stroke-width="1"/>',
        f'<text x="400" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{title}</text>',
        f'<text x="{left - 5}" y="{top + 5}" text-anchor="end" font-family="sans-serif" font-size="11">{y1:.4g}</text>',
        f'<text x="{left - 5}" y="{top + height}" text-anchor="end" font-family="sans-serif" font-size="11">0</text>',
        f'<text x="{left}" y="{top + height + 18}" font-family="sans-serif" font-size="11">{x0:g}</text>',
        f'<text x="{left + width}" y="{top + height + 18}" text-anchor="end" font-family="sans-serif" font-size="11">{x1:g}</text>',
    ]
    if observed is not None:
        pts = _polyline(xs, observed, x0, x1, 0.0, y1, box)
        out.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="2"/>')
    if predicted is not None:
        pts = _polyline(xs, predicted, x0, x1, 0.0, y1, box)
        out.append(f'<polyline points="{pts}" fill="none" stroke="red" stroke-width="2" stroke-dasharray="6,4"/>')
    out.append('<text x="680" y="390" font-family="sans-serif" font-size="11">black: observed, red dashed: predicted</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_outputs(results: dict, out_dir) -> list[Path]:
    """Write whichever of ``fit``, ``predictions``, ``theory`` are present in ``results``.

    ``fit`` and ``theory`` are JSON-serializable mappings (or objects with
    ``to_dict``); ``predictions`` is a :class:`~eahawkes.forecast.PredictionSeries`,
    which also produces ``plots/node<k>.svg``. Output bytes depend only on
    the inputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for key in ("fit", "theory"):
        if key in results:
            obj = results[key]
            obj = obj.to_dict() if hasattr(obj, "to_dict") else obj
            path = out / f"{key}.json"
            _write_json(path, obj)
            written.append(path)
    if "predictions" in results:
        series = results["predictions"]
        path = out / "predictions.csv"
        write_predictions_csv(path, series)
        written.append(path)
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        names = results.get("node_names") or [f"node{k}" for k in range(series.predicted.shape[1])]
        for v, name in enumerate(names):
            obs = None if series.observed is None else series.observed[:, v]
            svg = svg_chart(series.bins, obs, series.predicted[:, v], title=str(name))
            p = plots / f"node{v}.svg"
            p.write_text(svg, encoding="utf-8")
            written.append(p)
    return written


__all__ = [
    "CONFIG_SCHEMA",
    "RunConfig",
    "config_from_dict",
    "config_to_dict",
    "read_config",
    "read_counts_csv",
    "read_events_csv",
    "read_model_config",
    "svg_chart",
    "write_counts_csv",
    "write_events_csv",
    "write_model_config",
    "write_outputs",
    "write_predictions_csv",
]
