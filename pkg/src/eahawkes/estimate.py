"""EM estimation of the branching matrix with ``mu``, ``beta`` and the multiplier held fixed.

Both estimators maximize the Jensen surrogate of the log-likelihood in
which the compensator's multiplier is evaluated once at the horizon. At
the E-step responsibilities the surrogate equals that (horizon-evaluated)
log-likelihood, so the recorded bound trace must be nondecreasing.

Seed events (``EventStream.seed`` / ``BinnedCounts.seed_counts``) excite
later events but are never attributed to a parent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import _backend
from .core import (
    BinnedCounts,
    BranchingMatrix,
    Constant,
    EnvMultiplier,
    EventStream,
    KernelSpec,
    ModelSpec,
    _exact_excitation_integral,
)
from .errors import (
    CalibrationError,
    ConfigError,
    EmptyDataError,
    NumericalError,
    OrphanEventError,
    PreconditionError,
)

BOUND_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class FitConfig:
    """Fixed quantities and stopping rule for an EM fit.

    ``horizon`` defaults to the stream's horizon (continuous fits); binned
    fits always use the start of the last bin. ``compensator="exact"``
    integrates the multiplier in the M-step denominator instead of
    evaluating it at the horizon.
    """

    beta: KernelSpec
    decay: EnvMultiplier
    mu: np.ndarray
    mask: np.ndarray | None = None
    init_a: np.ndarray | None = None
    max_iters: int = 500
    tol: float = 1e-6
    horizon: float | None = None
    compensator: str = "paper"

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        m = mu.shape[0]
        if self.beta.beta.shape != (m, m):
            raise ConfigError("beta does not match the number of nodes")
        mask = np.ones((m, m), dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != (m, m):
            raise ConfigError("mask does not match the number of nodes")
        init = mask.astype(float) if self.init_a is None else np.asarray(self.init_a, dtype=float)
        if init.shape != (m, m) or np.any(init < 0):
            raise ConfigError("init_a must be a nonnegative M x M matrix")
        if np.any(init[~mask] != 0):
            raise ConfigError("init_a has nonzero entries outside the mask")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.compensator not in ("paper", "exact"):
            raise ConfigError(f"unknown compensator mode {self.compensator!r}")
        if self.horizon is not None and not self.horizon >= 0:
            raise ConfigError("horizon must be >= 0")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "init_a", init)
        object.__setattr__(self, "max_iters", int(self.max_iters))

    @classmethod
    def build(cls, mu, beta, decay: EnvMultiplier | None = None, **kw) -> "FitConfig":
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        m = mu.shape[0]
        b = np.asarray(beta, dtype=float)
        kernel = KernelSpec(np.full((m, m), float(b)) if b.ndim == 0 else b.reshape(m, m))
        return cls(kernel, decay if decay is not None else Constant(1.0), mu, **kw)

    @property
    def n_nodes(self) -> int:
        return self.mu.shape[0]

    def model(self, a) -> ModelSpec:
        a = a.a if isinstance(a, BranchingMatrix) else a
        return ModelSpec(self.mu, BranchingMatrix(a, self.mask), self.beta, self.decay)


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of an EM fit.

    ``responsibilities`` are aggregated by source node: for continuous fits
    an ``(n, M + 1)`` array whose column 0 is the background share and
    column ``1 + v`` the share of all earlier node-``v`` events; for binned
    fits an ``(L, M, M + 1)`` array with the same layout per ``(bin, node)``.
    Rows of conditioned-on events/cells are zero.
    """

    a_hat: np.ndarray
    lower_bound_trace: tuple[float, ...]
    iterations: int
    converged: bool
    responsibilities: np.ndarray = field(repr=False)
    n_conditioned: int = 0

    def to_dict(self):
        return {
            "a_hat": [[float(x) for x in row] for row in self.a_hat],
            "lower_bound_trace": [float(x) for x in self.lower_bound_trace],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _alpha_matrix(alpha: EnvMultiplier, t: float, m: int) -> np.ndarray:
    if alpha.is_scalar:
        return np.full((m, m), float(alpha.scalar(t)))
    return alpha.matrix(t)


def _alpha_at(alpha: EnvMultiplier, times: np.ndarray, m: int) -> np.ndarray:
    """``alpha(t_k)`` as ``(n, M, M)`` (or ``(n, 1, 1)`` for scalar multipliers)."""
    if alpha.is_scalar:
        return np.asarray(alpha.scalar(times), dtype=float).reshape(-1, 1, 1)
    return np.stack([alpha.matrix(float(t)) for t in times]) if len(times) else np.zeros((0, m, m))


def _horizon(cfg: FitConfig, stream: EventStream) -> float:
    t = stream.horizon if cfg.horizon is None else cfg.horizon
    if len(stream) and t < stream.times[-1]:
        raise ConfigError(f"fit horizon {t} precedes the last event at {stream.times[-1]}")
    return float(t)


def _relative_change(new, old):
    scale = max(float(np.max(np.abs(old))), 1e-300)
    return float(np.max(np.abs(new - old))) / scale


def _exposure_continuous(cfg: FitConfig, stream: EventStream, t: float) -> np.ndarray:
    """``E[u, v]``: multiplier-weighted kernel mass of node-``v`` events on ``[t_j, t]``.

    The compensator is ``sum_u mu_u t + sum_{u,v} A_uv E[u, v]``.
    """
    m = cfg.n_nodes
    beta = cfg.beta.beta
    k = int(np.searchsorted(stream.times, t, side="right"))
    tj, nodes = stream.times[:k], stream.nodes[:k]
    E = np.zeros((m, m))
    if cfg.compensator == "paper":
        alpha_t = _alpha_matrix(cfg.decay, t, m)
        for v in range(m):
            lags = t - tj[nodes == v]
            for u in range(m):
                E[u, v] = alpha_t[u, v] * math.fsum(-np.expm1(-beta[u, v] * lags)) / beta[u, v]
        return E
    probe = cfg.model(np.ones((m, m)) * cfg.mask)
    for v in range(m):
        tv = tj[nodes == v]
        for u in range(m):
            if cfg.mask[u, v]:
                E[u, v] = math.fsum(_exact_excitation_integral(probe, u, v, float(s), t) for s in tv)
    return E


# ---------------------------------------------------------------------------
# continuous EM, dense reference operations
# ---------------------------------------------------------------------------


def _trigger_matrix(a, cfg: FitConfig, stream: EventStream) -> np.ndarray:
    """``T[i, j] = A_{u_i,u_j} alpha(t_i) exp(-beta (t_i - t_j))`` for ``j < i``."""
    A = a.a if isinstance(a, BranchingMatrix) else np.asarray(a, dtype=float)
    t, u = stream.times, stream.nodes
    n = len(stream)
    lag = t[:, None] - t[None, :]
    lower = np.tril(np.ones((n, n), dtype=bool), k=-1)
    beta = cfg.beta.beta[u[:, None], u[None, :]]
    alpha = _alpha_at(cfg.decay, t, cfg.n_nodes)
    if alpha.shape[1] == 1:
        mult = np.broadcast_to(alpha[:, 0, :], (n, n))
    else:
        mult = alpha[np.arange(n)[:, None], u[:, None], u[None, :]]
    with np.errstate(over="ignore"):
        T = np.where(lower, A[u[:, None], u[None, :]] * mult * np.exp(-beta * np.where(lower, lag, 0.0)), 0.0)
    return T


def em_estep_continuous(a, cfg: FitConfig, stream: EventStream) -> np.ndarray:
    """Dense responsibilities ``p`` (``n x n``): ``p[i, i]`` background, ``p[i, j]`` parent ``j < i``.

    Rows of seed events are zero.
    """
    if not len(stream):
        raise EmptyDataError("event stream is empty")
    T = _trigger_matrix(a, cfg, stream)
    mu = cfg.mu[stream.nodes]
    den = mu + T.sum(axis=1)
    p = T.copy()
    p[np.diag_indices_from(p)] = mu
    live = ~stream.seed
    bad = np.flatnonzero(live & (den <= 0))
    if bad.size:
        k = int(bad[0])
        raise OrphanEventError(k, float(stream.times[k]))
    p[live] /= den[live][:, None]
    p[~live] = 0.0
    return p


def em_mstep_continuous(p: np.ndarray, cfg: FitConfig, stream: EventStream) -> BranchingMatrix:
    """``A_uv = sum p_ij (u_i=u, u_j=v) / E[u, v]``; zero where the mask or denominator says so."""
    m = cfg.n_nodes
    u = stream.nodes
    num = np.zeros((m, m))
    off = np.tril(p, k=-1)
    for a_ in range(m):
        for b_ in range(m):
            num[a_, b_] = math.fsum(off[np.ix_(u == a_, u == b_)].ravel())
    E = _exposure_continuous(cfg, stream, _horizon(cfg, stream))
    return BranchingMatrix(_ratio(num, E, cfg.mask), cfg.mask)


def _ratio(num, den, mask):
    out = np.zeros_like(num)
    ok = mask & (den > 0)
    out[ok] = num[ok] / den[ok]
    return out


def lower_bound(a, p: np.ndarray, cfg: FitConfig, stream: EventStream) -> float:
    """Jensen lower bound of the log-likelihood at branching matrix ``a`` and responsibilities ``p``.

    ``sum_i [p_ii log(mu / p_ii) + sum_{j<i} p_ij log(T_ij / p_ij)] - compensator``
    with ``0 log(0/0) = 0``. Returns ``-inf`` if some ``p_ij > 0`` has a zero rate.
    Rows of non-seed events must sum to 1; the bound property needs it.
    """
    A = a.a if isinstance(a, BranchingMatrix) else np.asarray(a, dtype=float)
    T = _trigger_matrix(A, cfg, stream)
    rates = T.copy()
    rates[np.diag_indices_from(rates)] = cfg.mu[stream.nodes]
    live = ~stream.seed
    P = p[live]
    if P.size and np.max(np.abs(P.sum(axis=1) - 1)) > 1e-9:
        raise PreconditionError("responsibility rows of non-seed events must sum to 1")
    R = rates[live]
    pos = P > 0
    if np.any(pos & (R <= 0)):
        return -math.inf
    terms = np.zeros_like(P)
    terms[pos] = P[pos] * (np.log(R[pos]) - np.log(P[pos]))
    horizon = _horizon(cfg, stream)
    E = _exposure_continuous(cfg, stream, horizon)
    comp = math.fsum(cfg.mu * horizon) + math.fsum((A * E).ravel())
    return math.fsum(terms.ravel()) - comp


# ---------------------------------------------------------------------------
# continuous EM, aggregated fit
# ---------------------------------------------------------------------------


def _aggregated_continuous(A, cfg, stream, R, alpha_ev):
    """Per-event trigger rates by source node and their denominators."""
    u = stream.nodes
    if alpha_ev.shape[1] == 1:
        mult = alpha_ev[:, 0, :]
    else:
        mult = alpha_ev[np.arange(len(u)), u, :]
    trig = A[u, :] * mult * R
    den = cfg.mu[u] + trig.sum(axis=1)
    return trig, den


def em_fit_continuous(stream: EventStream, cfg: FitConfig) -> FitResult:
    """Event-level EM for ``A``.

    Works on per-source-node sums ``R[k, v] = sum_{j<k, u_j=v} exp(-beta (t_k - t_j))``
    so memory is ``O(n M)``. Since every earlier event of one node shares
    the same ``A`` entry, the bound at a new ``A'`` under responsibilities
    computed at ``A`` is ``sum_k [log den_k + sum_v P_kv log(A'_uv / A_uv)]``
    minus the compensator, which is what the MM step maximizes.
    """
    if not len(stream):
        raise EmptyDataError("event stream is empty")
    if stream.n_nodes != cfg.n_nodes:
        raise ConfigError("stream and fit config disagree on the number of nodes")
    m = cfg.n_nodes
    horizon = _horizon(cfg, stream)
    R = _backend.kernels.excitation_at_events(stream.times, stream.nodes, cfg.beta.beta, m)
    alpha_ev = _alpha_at(cfg.decay, stream.times, m)
    E = _exposure_continuous(cfg, stream, horizon)
    live = ~stream.seed
    u = stream.nodes
    base = math.fsum(cfg.mu * horizon)

    A = cfg.init_a.copy()
    trace = []
    converged = False
    it = 0
    P = None
    for it in range(1, cfg.max_iters + 1):
        trig, den = _aggregated_continuous(A, cfg, stream, R, alpha_ev)
        bad = np.flatnonzero(live & (den <= 0))
        if bad.size:
            k = int(bad[0])
            raise OrphanEventError(k, float(stream.times[k]))
        bound = math.fsum(np.log(den[live])) - base - math.fsum((A * E).ravel())
        if trace and bound < trace[-1] - BOUND_SLACK * max(1.0, abs(trace[-1])):
            raise NumericalError(f"EM bound decreased from {trace[-1]} to {bound} at iteration {it}")
        trace.append(bound)
        P = np.zeros((len(stream), m))
        P[live] = trig[live] / den[live][:, None]
        num = np.zeros((m, m))
        for a_ in range(m):
            rows = live & (u == a_)
            for v in range(m):
                num[a_, v] = math.fsum(P[rows, v])
        A_new = _ratio(num, E, cfg.mask)
        change = _relative_change(A_new, A)
        A = A_new
        if change < cfg.tol:
            converged = True
            break
    resp = np.zeros((len(stream), m + 1))
    resp[live, 0] = cfg.mu[u[live]] / den[live]
    resp[:, 1:] = P
    return FitResult(A, tuple(trace), it, converged, resp, int((~live).sum()))


# ---------------------------------------------------------------------------
# binned EM
# ---------------------------------------------------------------------------


def _binned_excitation(binned: BinnedCounts, beta: np.ndarray) -> np.ndarray:
    """``X[i, u, v] = sum_{j<i} n_jv exp(-delta beta_uv (i - j))``."""
    n = binned.counts.astype(float)
    L, m = n.shape
    X = np.zeros((L, m, m))
    decay = np.exp(-binned.delta * beta)
    state = np.zeros((m, m))
    for i in range(1, L):
        state = decay * (state + n[i - 1][None, :])
        X[i] = state
    return X


def binned_responsibilities(a, cfg: FitConfig, binned: BinnedCounts):
    """Per ``(bin, node)`` background share and source-node shares.

    Returns ``(resp, den, live)``: ``resp[i, u, 0]`` is ``mu_u / den``, and
    ``resp[i, u, 1 + v] = sum_{j<i} n_jv p_ij^{uv}``, the combined share of
    all earlier node-``v`` events, where ``p_ij^{uv} = A_uv d exp(...) / den``.
    ``live`` marks cells with non-seed events and a positive denominator.
    """
    A = a.a if isinstance(a, BranchingMatrix) else np.asarray(a, dtype=float)
    X = _binned_excitation(binned, cfg.beta.beta)
    return _binned_core(A, cfg, binned, X, _bin_multipliers(cfg, binned))


def _bin_multipliers(cfg, binned):
    t = binned.bin_start(np.arange(binned.n_bins))
    return np.stack([_alpha_matrix(cfg.decay, float(s), cfg.n_nodes) for s in t])


def _binned_core(A, cfg, binned, X, alpha_bins):
    trig = alpha_bins * A[None, :, :] * X
    den = cfg.mu[None, :] + trig.sum(axis=2)
    fresh = binned.counts - binned.seed_counts
    live = (fresh > 0) & (den > 0)
    resp = np.zeros(trig.shape[:2] + (trig.shape[2] + 1,))
    safe = np.where(live, den, 1.0)
    resp[..., 0] = np.where(live, cfg.mu[None, :] / safe, 0.0)
    resp[..., 1:] = np.where(live[..., None], trig / safe[..., None], 0.0)
    return resp, den, live


def em_fit_binned(binned: BinnedCounts, cfg: FitConfig) -> FitResult:
    """EM for ``A`` from counts per bin.

    Only pairs ``j < i`` contribute (no within-bin excitation). The M-step
    is ``A_uv = beta_uv sum_i n_iu P_iu^v / (d(delta l) sum_j n_jv (1 - exp(-delta beta_uv (l - j))))``
    with ``l`` the last bin. Cells whose node has ``mu = 0`` and no earlier
    trigger cannot be attributed; like seeds they are conditioned on and
    counted in ``n_conditioned``.
    """
    if binned.n_nodes != cfg.n_nodes:
        raise ConfigError("counts and fit config disagree on the number of nodes")
    if not np.any(binned.counts):
        raise EmptyDataError("all bin counts are zero")
    m = cfg.n_nodes
    L = binned.n_bins
    l = L - 1
    beta = cfg.beta.beta
    n = binned.counts.astype(float)
    fresh = (binned.counts - binned.seed_counts).astype(float)
    X = _binned_excitation(binned, beta)
    alpha_bins = _bin_multipliers(cfg, binned)
    t_end = float(binned.bin_start(l))

    lags = (l - np.arange(L)) * binned.delta
    E = np.zeros((m, m))
    alpha_end = _alpha_matrix(cfg.decay, t_end, m)
    for u_ in range(m):
        for v in range(m):
            E[u_, v] = alpha_end[u_, v] * math.fsum(n[:, v] * -np.expm1(-beta[u_, v] * lags)) / beta[u_, v]
    base = math.fsum(cfg.mu * binned.delta * L)

    A = cfg.init_a.copy()
    _, _, live0 = _binned_core(A, cfg, binned, X, alpha_bins)
    trace = []
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        resp, den, live = _binned_core(A, cfg, binned, X, alpha_bins)
        if np.any(live0 & ~live):
            raise NumericalError("a bin lost every possible parent during EM")
        w = np.where(live, fresh, 0.0)
        bound = math.fsum((w[live] * np.log(den[live])).ravel()) - base - math.fsum((A * E).ravel())
        if trace and bound < trace[-1] - BOUND_SLACK * max(1.0, abs(trace[-1])):
            raise NumericalError(f"EM bound decreased from {trace[-1]} to {bound} at iteration {it}")
        trace.append(bound)
        num = np.einsum("iu,iuv->uv", w, resp[..., 1:])
        A_new = _ratio(num, E, cfg.mask)
        change = _relative_change(A_new, A)
        A = A_new
        if change < cfg.tol:
            converged = True
            break
    n_cond = int(binned.seed_counts.sum() + fresh[(fresh > 0) & ~live0].sum())
    return FitResult(A, tuple(trace), it, converged, resp, n_cond)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Pin:
    """Rescale so that ``A[entry] == value``."""

    entry: tuple[int, int]
    value: float


@dataclass(frozen=True, eq=False)
class ScaleToData:
    """Rescale by the factor minimizing one-step prediction RMSE on ``binned[start:end]``.

    ``model`` supplies ``mu``, ``beta`` and the multiplier; its ``A`` is
    replaced by the scaled estimate.
    """

    model: ModelSpec
    binned: BinnedCounts
    start: int = 1
    end: int | None = None
    bounds: tuple[float, float] = (1e-4, 1e4)


def calibration_scale(a_hat, mode) -> float:
    """The factor ``c`` that :func:`calibrate` multiplies ``a_hat`` by."""
    A = a_hat.a if isinstance(a_hat, BranchingMatrix) else np.asarray(a_hat, dtype=float)
    if isinstance(mode, Pin):
        cur = float(A[tuple(mode.entry)])
        if not cur > 0:
            raise CalibrationError(f"cannot pin entry {tuple(mode.entry)}: current estimate is {cur}")
        return float(mode.value) / cur
    if isinstance(mode, ScaleToData):
        from .forecast import rolling_one_step

        mask = A > 0
        base = rolling_one_step(mode.model.with_branching(A, mask), mode.binned, mode.start, mode.end)
        bg = rolling_one_step(mode.model.with_branching(np.zeros_like(A), mask), mode.binned, mode.start, mode.end)
        exc = base.predicted - bg.predicted
        resid = base.observed - bg.predicted

        def rmse(log_c):
            c = 10.0**log_c
            return float(np.sqrt(np.mean((c * exc - resid) ** 2)))

        lo, hi = (math.log10(b) for b in mode.bounds)
        res = optimize.minimize_scalar(rmse, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        return float(10.0**res.x)
    raise ConfigError(f"unknown calibration mode {mode!r}")


def calibrate(a_hat, mode) -> BranchingMatrix:
    """Rescale an estimate: ``Pin`` fixes one entry, ``ScaleToData`` fits the overall scale."""
    A = a_hat.a if isinstance(a_hat, BranchingMatrix) else np.asarray(a_hat, dtype=float)
    mask = a_hat.mask if isinstance(a_hat, BranchingMatrix) else None
    return BranchingMatrix(A * calibration_scale(A, mode), mask)
