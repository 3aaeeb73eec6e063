"""Simulation of EAH/EAHDM realizations.

Two independent samplers are provided: Ogata thinning on the conditional
intensity, and the cluster (branching) construction in which immigrants
arrive as a Poisson process and every event spawns its direct offspring
from a non-homogeneous Poisson process with rate ``alpha(t) A phi(t - tau)``.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _backend
from ._pykernels import UniformStream
from .core import (
    BinnedCounts,
    Constant,
    EventStream,
    MatrixFunction,
    ModelSpec,
    nudge_ties_forward,
)
from .errors import ConfigError, ExplosionError, PreconditionError

MAX_EVENTS = 10**6


@dataclass(frozen=True, eq=False)
class SimConfig:
    """Everything a simulation run depends on.

    ``seeds`` are conditioned-on initial events; they trigger offspring but
    are not immigrants.
    """

    model: ModelSpec
    horizon: float
    seeds: tuple[tuple[float, int], ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        seeds = tuple(sorted((float(t), int(v)) for t, v in self.seeds))
        if not self.horizon > 0:
            raise ConfigError(f"horizon must be > 0, got {self.horizon}")
        for t, v in seeds:
            if not 0 <= t < self.horizon:
                raise ConfigError(f"seed event at t={t} outside [0, {self.horizon})")
            if not 0 <= v < self.model.n_nodes:
                raise ConfigError(f"seed event node {v} out of range")
        object.__setattr__(self, "seeds", seeds)
        object.__setattr__(self, "horizon", float(self.horizon))
        object.__setattr__(self, "rng_seed", int(self.rng_seed))

    def replicate(self, index: int) -> "SimConfig":
        return SimConfig(self.model, self.horizon, self.seeds, self.rng_seed + index)

    @property
    def seed_times(self):
        return np.array([t for t, _ in self.seeds], dtype=float)

    @property
    def seed_nodes(self):
        return np.array([v for _, v in self.seeds], dtype=np.int64)


@dataclass(frozen=True)
class ClusterTree:
    time: float
    node: int
    children: tuple["ClusterTree", ...] = ()
    is_seed: bool = False

    def size(self) -> int:
        n, stack = 0, [self]
        while stack:
            c = stack.pop()
            n += 1
            stack.extend(c.children)
        return n

    def events(self) -> list[tuple[float, int]]:
        out, stack = [], [self]
        while stack:
            c = stack.pop()
            out.append((c.time, c.node))
            stack.extend(c.children)
        return out

    def first_generation(self) -> int:
        return len(self.children)


@functools.lru_cache(maxsize=32)
def _check_stability(model: ModelSpec) -> bool:
    # models are immutable and hash by identity, so replicates reuse the verdict
    from .theory import stability_check

    return stability_check(model).stable


def _rng(seed):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# thinning
# ---------------------------------------------------------------------------


def _thinning_matrix(model, seed_t, seed_node, horizon, rng, cap):
    """Thinning for per-entry multipliers (pure Python).

    Between events the envelope is ``mu + sum_ij bound_ij(t_cur) S_ij`` where
    ``bound_ij`` is the current multiplier value (times the entry's jump
    factor) for nonincreasing entries and the supplied constant envelope
    otherwise.
    """
    alpha: MatrixFunction = model.alpha
    monotone = alpha.is_nonincreasing()
    if not monotone and alpha.envelope is None:
        raise ConfigError("thinning needs a dominating envelope for a non-monotone multiplier")
    jump = alpha.jump_factors() if monotone else None
    m = model.n_nodes
    mu, A, beta = model.mu, model.A, model.beta
    U = UniformStream(rng)
    S = np.zeros((m, m))
    times, nodes, flags = [], [], []
    t, si = 0.0, 0
    while True:
        bound = alpha.matrix(t) * jump if monotone else alpha.envelope
        lam_bar = mu.sum() + (bound * S).sum()
        nxt = seed_t[si] if si < len(seed_t) else math.inf
        cand = t - math.log(1.0 - U.next()) / lam_bar if lam_bar > 0 else math.inf
        if nxt <= cand:
            S *= np.exp(-beta * (nxt - t))
            t = nxt
            v = int(seed_node[si])
            times.append(t)
            nodes.append(v)
            flags.append(True)
            S[:, v] += A[:, v]
            si += 1
        else:
            if cand >= horizon:
                break
            S *= np.exp(-beta * (cand - t))
            t = cand
            lam = mu + (alpha.matrix(t) * S).sum(axis=1)
            target = U.next() * lam_bar
            cum = np.cumsum(lam)
            if target < cum[-1]:
                v = int(np.searchsorted(cum, target, side="right"))
                times.append(t)
                nodes.append(v)
                flags.append(False)
                S[:, v] += A[:, v]
        if len(times) > cap:
            return times, nodes, flags, 1
    return times, nodes, flags, 0


def simulate_thinning(cfg: SimConfig, max_events: int = MAX_EVENTS) -> EventStream:
    """Sample a realization on ``[0, horizon)`` by Ogata thinning.

    The running intensity is a valid envelope because both the multiplier
    (nonincreasing) and the exponential kernel only decrease between
    events. Models whose branching is supercritical still run, with a
    warning, until ``max_events`` is exceeded.
    """
    model = cfg.model
    if not _check_stability(model):
        warnings.warn("model is not subcritical (sup m >= 1); simulation may explode", RuntimeWarning, stacklevel=2)
    rng = _rng(cfg.rng_seed)
    if model.alpha.is_scalar:
        times, nodes, flags, status = _backend.kernels.thinning_scalar(
            model.mu, model.A, model.beta, model.alpha.table(),
            cfg.seed_times, cfg.seed_nodes, cfg.horizon, rng, max_events,
        )
    else:
        times, nodes, flags, status = _thinning_matrix(
            model, cfg.seed_times, cfg.seed_nodes, cfg.horizon, rng, max_events
        )
    if status:
        raise ExplosionError(max_events)
    times = nudge_ties_forward(np.asarray(times, dtype=float))
    return EventStream(times, nodes, model.n_nodes, max(cfg.horizon, times[-1] if len(times) else 0.0), flags)


# ---------------------------------------------------------------------------
# branching
# ---------------------------------------------------------------------------


def _branching_matrix(model, root_t, root_node, horizon, rng, cap):
    """Cluster construction for per-entry multipliers (pure Python).

    Candidate offspring come from ``bound * A exp(-beta (t - tau))`` and are
    kept with probability ``alpha(t) / bound``; ``bound`` is ``alpha(tau)``
    times the entry's jump factor for nonincreasing entries and the constant
    envelope otherwise.
    """
    alpha: MatrixFunction = model.alpha
    monotone = alpha.is_nonincreasing()
    if not monotone and alpha.envelope is None:
        raise ConfigError("branching needs a dominating envelope for a non-monotone multiplier")
    jump = alpha.jump_factors() if monotone else None
    m = model.n_nodes
    U = UniformStream(rng)
    times, nodes, parents = [], [], []
    for i in range(m):
        if model.mu[i] > 0:
            t = 0.0
            while True:
                t += -math.log(1.0 - U.next()) / model.mu[i]
                if t >= horizon:
                    break
                times.append(t)
                nodes.append(i)
                parents.append(-1)
    n_imm = len(times)
    for t, v in zip(root_t, root_node):
        times.append(float(t))
        nodes.append(int(v))
        parents.append(-1)
    idx = 0
    while idx < len(times):
        tau, v = times[idx], nodes[idx]
        for i in range(m):
            a = model.A[i, v]
            if a <= 0:
                continue
            b = model.beta[i, v]
            bound = alpha.entry(tau, i, v) * jump[i, v] if monotone else alpha.envelope[i, v]
            if bound <= 0:
                continue
            scale = a * bound / b
            total = scale * (1.0 - math.exp(-b * (horizon - tau)))
            cum = 0.0
            while True:
                cum += -math.log(1.0 - U.next())
                if cum >= total:
                    break
                tc = tau - math.log(1.0 - cum / scale) / b
                if U.next() * bound < alpha.entry(tc, i, v) and tc < horizon:
                    times.append(tc)
                    nodes.append(i)
                    parents.append(idx)
            if len(times) > cap:
                return times, nodes, parents, n_imm, 1
        idx += 1
    return times, nodes, parents, n_imm, 0


def branching_raw(model: ModelSpec, horizon: float, root_t, root_node, rng, max_events: int = MAX_EVENTS):
    """Unsorted branching output: ``(times, nodes, parents, n_immigrants)``.

    Roots (``parents == -1``) are the immigrants followed by the supplied
    ``root_t``/``root_node`` events. No stability check is made.
    """
    root_t = np.asarray(root_t, dtype=float)
    root_node = np.asarray(root_node, dtype=np.int64)
    if model.alpha.is_scalar:
        out = _backend.kernels.branching_scalar(
            model.mu, model.A, model.beta, model.alpha.table(), root_t, root_node, horizon, rng, max_events
        )
    else:
        out = _branching_matrix(model, root_t, root_node, horizon, rng, max_events)
    times, nodes, parents, n_imm, status = out
    if status:
        raise ExplosionError(max_events)
    return np.asarray(times, dtype=float), np.asarray(nodes, dtype=np.int64), np.asarray(parents, dtype=np.int64), n_imm


def _build_trees(times, nodes, parents, n_roots, n_imm):
    children = [[] for _ in range(len(times))]
    for k in range(len(times) - 1, n_roots - 1, -1):
        children[parents[k]].append(k)
    built = [None] * len(times)
    # offspring always come after their parent, so a reverse pass is bottom-up
    for k in range(len(times) - 1, -1, -1):
        kids = tuple(built[c] for c in sorted(children[k], key=lambda c: times[c]))
        built[k] = ClusterTree(float(times[k]), int(nodes[k]), kids, is_seed=k >= n_imm and k < n_roots)
    return [built[k] for k in range(n_roots)]


def simulate_branching(
    cfg: SimConfig, allow_unstable: bool = False, max_events: int = MAX_EVENTS
) -> tuple[EventStream, list[ClusterTree]]:
    """Sample a realization through its cluster representation.

    Returns the merged stream and one tree per root (immigrants first, then
    seeds). Supercritical models are refused unless ``allow_unstable``, in
    which case the event cap is the only guard.
    """
    model = cfg.model
    if not allow_unstable and not _check_stability(model):
        raise ConfigError("branching simulation needs sup m(u) < 1; pass allow_unstable=True to run with the event cap")
    rng = _rng(cfg.rng_seed)
    times, nodes, parents, n_imm = branching_raw(model, cfg.horizon, cfg.seed_times, cfg.seed_nodes, rng, max_events)
    n_roots = n_imm + len(cfg.seeds)
    trees = _build_trees(times, nodes, parents, n_roots, n_imm)
    is_seed = np.zeros(len(times), dtype=bool)
    is_seed[n_imm:n_roots] = True
    order = np.lexsort((nodes, times))
    stream_t = nudge_ties_forward(times[order])
    horizon = max(cfg.horizon, stream_t[-1] if len(stream_t) else 0.0)
    return EventStream(stream_t, nodes[order], model.n_nodes, horizon, is_seed[order]), trees


# ---------------------------------------------------------------------------
# binning
# ---------------------------------------------------------------------------


def bin_index(t, delta, origin=0.0):
    # rounding first keeps exact multiples of delta (e.g. 0.3 / 0.1) in the right bin
    return np.floor(np.round((np.asarray(t, dtype=float) - origin) / delta, 9)).astype(np.int64)


def bin_events(stream: EventStream, delta: float, origin: float = 0.0, n_bins: int | None = None) -> BinnedCounts:
    """Count events of each node in ``[origin + i delta, origin + (i+1) delta)``."""
    if not delta > 0:
        raise PreconditionError(f"bin size must be > 0, got {delta}")
    idx = bin_index(stream.times, delta, origin)
    if idx.size and idx.min() < 0:
        raise PreconditionError("events precede the binning origin")
    if n_bins is None:
        n_bins = int(math.ceil(round((stream.horizon - origin) / delta, 9)))
        if idx.size:
            n_bins = max(n_bins, int(idx.max()) + 1)
        n_bins = max(n_bins, 1)
    keep = idx < n_bins
    counts = np.zeros((n_bins, stream.n_nodes), dtype=np.int64)
    seeds = np.zeros_like(counts)
    np.add.at(counts, (idx[keep], stream.nodes[keep]), 1)
    sel = keep & stream.seed
    np.add.at(seeds, (idx[sel], stream.nodes[sel]), 1)
    return BinnedCounts(delta, counts, origin, seeds)


def simulate_replicates(cfg: SimConfig, n: int, method: str = "thinning", **kw) -> list[EventStream]:
    """``n`` independent runs; replicate ``k`` uses ``rng_seed + k``."""
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for k in range(n):
            rc = cfg.replicate(k)
            if method == "thinning":
                out.append(simulate_thinning(rc, **kw))
            elif method == "branching":
                out.append(simulate_branching(rc, **kw)[0])
            else:
                raise ConfigError(f"unknown simulation method {method!r}")
    return out


__all__ = [
    "ClusterTree",
    "SimConfig",
    "bin_events",
    "branching_raw",
    "simulate_branching",
    "simulate_replicates",
    "simulate_thinning",
]
