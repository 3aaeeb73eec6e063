"""Domain types and the intensity/compensator of the EAH model.

Times are in days. The kernel is exponential, ``phi_ij(s) = exp(-beta_ij s)``
for ``s >= 0``, so a kernel is fully described by its decay-rate matrix.
An environmental multiplier scales the excitation term; it is either a
constant, a scalar decay ``d(t)`` shared by every entry, or a matrix of
per-entry functions.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, PreconditionError

# Closed grammar for decay pieces. Integer codes are what the compiled
# kernels switch on.
FORM_CONST = "c"
FORM_MAX_POWER = "c/max(a,t)^p"
FORM_SHIFTED_POWER = "c/(t^p-q)"
FORM_CODES = {FORM_CONST: 0, FORM_MAX_POWER: 1, FORM_SHIFTED_POWER: 2}

TIE_NUDGE = 1e-9


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# decay functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayPiece:
    """One closed-form piece, active on ``(previous upto, upto]``.

    The first piece of a :class:`DecaySpec` also contains ``t = 0``.
    """

    upto: float
    form: str
    c: float = 1.0
    a: float = 0.0
    p: float = 0.0
    q: float = 0.0

    def __post_init__(self):
        if self.form not in FORM_CODES:
            raise ConfigError(f"unknown decay form {self.form!r}; expected one of {sorted(FORM_CODES)}")
        for name in ("upto", "c", "a", "p", "q"):
            v = float(getattr(self, name))
            if math.isnan(v):
                raise ConfigError(f"decay piece field {name} is NaN")
            object.__setattr__(self, name, v)
        if self.form != FORM_CONST and self.p < 0:
            raise ConfigError("power-law decay pieces need p >= 0")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        if self.form == FORM_CONST:
            return np.full_like(t, self.c)
        if self.form == FORM_MAX_POWER:
            return self.c / np.maximum(self.a, t) ** self.p
        with np.errstate(divide="ignore"):
            return self.c / (t ** self.p - self.q)


@dataclass(frozen=True)
class DecaySpec:
    """Piecewise closed-form function on ``[0, inf)``.

    Breakpoints belong to the earlier piece, so ``[(20, "c/max(a,t)^p", ...),
    (inf, "c/(t^p-q)", ...)]`` means ``0 <= t <= 20`` and ``t > 20``.
    """

    pieces: tuple[DecayPiece, ...]

    def __post_init__(self):
        pieces = tuple(self.pieces)
        object.__setattr__(self, "pieces", pieces)
        if not pieces:
            raise ConfigError("decay spec needs at least one piece")
        uptos = [p.upto for p in pieces]
        if any(u <= 0 for u in uptos):
            raise ConfigError("decay piece bounds must be positive")
        if any(b <= a for a, b in zip(uptos, uptos[1:])):
            raise ConfigError("decay piece bounds must be strictly increasing")
        if not math.isinf(uptos[-1]):
            raise ConfigError(f"decay pieces stop at t={uptos[-1]}; the last piece must extend to infinity")
        vals = self(self._check_grid())
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ConfigError("decay function must be finite and nonnegative on [0, inf)")

    @classmethod
    def constant(cls, c: float) -> "DecaySpec":
        return cls((DecayPiece(math.inf, FORM_CONST, c=c),))

    def _check_grid(self, edges=True):
        grid = [np.arange(0.0, 60.0 + 1e-9, 0.01), [100.0, 1e3, 1e4, 1e6]]
        if edges:
            for p in self.pieces[:-1]:
                grid.append([p.upto, p.upto + 1e-9, p.upto + 1e-6])
        return np.unique(np.concatenate([np.asarray(g, dtype=float) for g in grid]))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = np.empty_like(t)
        lo = -math.inf
        for p in self.pieces:
            sel = (t > lo) & (t <= p.upto)
            if np.any(sel):
                out[sel] = p.value(t[sel])
            lo = p.upto
        return out

    def is_nonincreasing(self, grid=None, atol=1e-15) -> bool:
        """Nonincreasing on a 0.01-step grid over ``[0, 60]`` plus far points.

        Each piece is monotone by construction (``p >= 0``), but a piece
        boundary may still carry a small upward jump that a 0.01 grid
        does not resolve; see :meth:`jump_factor`.
        """
        if grid is None and atol == 1e-15:
            return self._monotone_on_default_grid
        grid = self._check_grid(edges=False) if grid is None else np.asarray(grid, dtype=float)
        return bool(np.all(np.diff(self(grid)) <= atol))

    @functools.cached_property
    def _monotone_on_default_grid(self) -> bool:
        return bool(np.all(np.diff(self(self._check_grid(edges=False))) <= 1e-15))

    def jump_factor(self) -> float:
        """Product of upward jump ratios ``d(b+) / d(b)`` over the breakpoints.

        Bounds ``sup_{s > t} d(s) / d(t)`` when every piece is nonincreasing,
        so ``factor * d(t)`` is a valid envelope for ``d`` on ``[t, inf)``.
        For the epidemic-control decay it is about 1.0023.
        """
        f = 1.0
        for left, right in zip(self.pieces, self.pieces[1:]):
            lv = float(left.value(left.upto))
            rv = float(right.value(left.upto))
            if rv > lv:
                f *= rv / lv if lv > 0 else math.inf
        return f

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(p.upto for p in self.pieces[:-1])

    def table(self):
        """Flat arrays ``(upto, code, c, a, p, q)`` for the compiled kernels."""
        cols = zip(*[(p.upto, FORM_CODES[p.form], p.c, p.a, p.p, p.q) for p in self.pieces])
        upto, code, c, a, p, q = cols
        return (
            np.array(upto, dtype=float),
            np.array(code, dtype=np.int64),
            np.array(c, dtype=float),
            np.array(a, dtype=float),
            np.array(p, dtype=float),
            np.array(q, dtype=float),
        )


def epidemic_control_decay() -> DecaySpec:
    """``1/max(7,t)^2`` on ``[0, 20]`` then ``1/(t^2.4 - 926.7)``.

    Flat for the first week, then a power-law decline; the constant 926.7
    makes the two pieces meet at ``t = 20``.
    """
    return DecaySpec(
        (
            DecayPiece(20.0, FORM_MAX_POWER, c=1.0, a=7.0, p=2.0),
            DecayPiece(math.inf, FORM_SHIFTED_POWER, c=1.0, p=2.4, q=926.7),
        )
    )


def eval_decay(spec: DecaySpec, t: float) -> float:
    """Value of a decay function at a single time ``t >= 0``."""
    t = float(t)
    if not t >= 0.0:
        raise DomainError(f"decay evaluated at t={t}; time must be >= 0")
    lo = -math.inf
    for p in spec.pieces:
        if lo < t <= p.upto:
            return float(p.value(t))
        lo = p.upto
    raise ConfigError(f"no decay piece covers t={t}")


# ---------------------------------------------------------------------------
# environmental multipliers
# ---------------------------------------------------------------------------


class EnvMultiplier:
    """Nonnegative time-varying factor on the excitation term."""

    is_scalar = True

    def matrix(self, t: float, m: int) -> np.ndarray:
        raise NotImplementedError

    def entry(self, t: float, i: int, j: int) -> float:
        raise NotImplementedError

    def scalar(self, t):
        raise TypeError(f"{type(self).__name__} is not a scalar multiplier")

    def is_nonincreasing(self) -> bool:
        raise NotImplementedError

    def breakpoints(self) -> tuple[float, ...]:
        return ()


@dataclass(frozen=True)
class Constant(EnvMultiplier):
    value: float = 1.0

    def __post_init__(self):
        v = float(self.value)
        if not (v >= 0 and math.isfinite(v)):
            raise ConfigError(f"constant multiplier must be finite and >= 0, got {self.value}")
        object.__setattr__(self, "value", v)

    def scalar(self, t):
        if np.ndim(t):
            return np.full(np.shape(t), self.value)
        return self.value

    def matrix(self, t, m):
        return np.full((m, m), self.value)

    def entry(self, t, i, j):
        return self.value

    def is_nonincreasing(self):
        return True

    def table(self):
        return DecaySpec.constant(self.value).table()


@dataclass(frozen=True)
class ScalarDecay(EnvMultiplier):
    """A single nonincreasing ``d(t)`` shared by every matrix entry."""

    decay: DecaySpec

    def __post_init__(self):
        if not self.decay.is_nonincreasing():
            raise ConfigError("scalar decay multiplier must be nonincreasing")

    def scalar(self, t):
        if np.ndim(t):
            return self.decay(t)
        return eval_decay(self.decay, t)

    def matrix(self, t, m):
        return np.full((m, m), eval_decay(self.decay, t))

    def entry(self, t, i, j):
        return eval_decay(self.decay, t)

    def is_nonincreasing(self):
        return True

    def breakpoints(self):
        return self.decay.breakpoints

    def table(self):
        return self.decay.table()


@dataclass(frozen=True, eq=False)
class MatrixFunction(EnvMultiplier):
    """Per-entry multipliers ``alpha_ij(t)``.

    ``envelope`` holds per-entry constants dominating each ``alpha_ij`` on
    ``[0, inf)``; simulators need it unless every entry is nonincreasing.
    """

    entries: tuple[tuple[DecaySpec, ...], ...]
    envelope: np.ndarray | None = None

    is_scalar = False

    def __post_init__(self):
        entries = tuple(tuple(row) for row in self.entries)
        m = len(entries)
        if m == 0 or any(len(row) != m for row in entries):
            raise ConfigError("matrix multiplier must be square and nonempty")
        object.__setattr__(self, "entries", entries)
        if self.envelope is not None:
            env = _frozen(self.envelope)
            if env.shape != (m, m) or np.any(env < 0):
                raise ConfigError("multiplier envelope must be a nonnegative M x M matrix")
            for i in range(m):
                for j in range(m):
                    spec = entries[i][j]
                    if np.any(spec(spec._check_grid()) > env[i, j] * (1 + 1e-12)):
                        raise ConfigError(f"envelope[{i}][{j}] does not dominate its multiplier")
            object.__setattr__(self, "envelope", env)

    @property
    def size(self):
        return len(self.entries)

    def matrix(self, t, m=None):
        return np.array([[eval_decay(s, t) for s in row] for row in self.entries])

    def entry(self, t, i, j):
        return eval_decay(self.entries[i][j], t)

    def entry_values(self, t, i, j):
        return self.entries[i][j](t)

    def is_nonincreasing(self):
        return all(s.is_nonincreasing() for row in self.entries for s in row)

    def jump_factors(self) -> np.ndarray:
        """Per-entry :meth:`DecaySpec.jump_factor`; ``jump * alpha(t)`` dominates ``alpha`` on ``[t, inf)``."""
        return np.array([[s.jump_factor() for s in row] for row in self.entries])

    def breakpoints(self):
        return tuple(sorted({b for row in self.entries for s in row for b in s.breakpoints}))


# ---------------------------------------------------------------------------
# model pieces
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """Exponential kernel decay rates (1/days), ``beta[i, j] > 0``."""

    beta: np.ndarray

    def __post_init__(self):
        b = _frozen(np.atleast_2d(self.beta))
        if b.shape[0] != b.shape[1]:
            raise ConfigError(f"beta must be square, got shape {b.shape}")
        if not np.all(b > 0) or not np.all(np.isfinite(b)):
            raise ConfigError("all kernel decay rates must be finite and > 0")
        object.__setattr__(self, "beta", b)

    @classmethod
    def uniform(cls, beta: float, m: int) -> "KernelSpec":
        return cls(np.full((m, m), float(beta)))


@dataclass(frozen=True, eq=False)
class BranchingMatrix:
    """Nonnegative branching matrix with a known support (skeleton)."""

    a: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        a = _frozen(np.atleast_2d(self.a))
        if a.shape[0] != a.shape[1]:
            raise ConfigError(f"branching matrix must be square, got shape {a.shape}")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ConfigError("branching matrix entries must be finite and >= 0")
        mask = np.ones(a.shape, dtype=bool) if self.mask is None else np.atleast_2d(self.mask).astype(bool)
        if mask.shape != a.shape:
            raise ConfigError("mask shape does not match branching matrix")
        if np.any(a[~mask] != 0):
            raise ConfigError("branching matrix has nonzero entries outside its mask")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "mask", _frozen(mask, dtype=bool))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    mu: np.ndarray
    a: BranchingMatrix
    kernel: KernelSpec
    alpha: EnvMultiplier = field(default_factory=Constant)

    def __post_init__(self):
        mu = _frozen(np.atleast_1d(self.mu))
        m = mu.shape[0]
        if mu.ndim != 1 or np.any(mu < 0) or not np.all(np.isfinite(mu)):
            raise ConfigError("mu must be a vector of finite nonnegative rates")
        if self.a.a.shape != (m, m) or self.kernel.beta.shape != (m, m):
            raise ConfigError(
                f"dimension mismatch: mu has {m} nodes, A is {self.a.a.shape}, beta is {self.kernel.beta.shape}"
            )
        if isinstance(self.alpha, MatrixFunction) and self.alpha.size != m:
            raise ConfigError("matrix multiplier size does not match the model")
        object.__setattr__(self, "mu", mu)

    @classmethod
    def build(cls, mu, a, beta, alpha: EnvMultiplier | None = None, mask=None) -> "ModelSpec":
        """Convenience constructor accepting scalars for univariate models."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        m = mu.shape[0]
        a = np.asarray(a, dtype=float).reshape(m, m)
        beta = np.asarray(beta, dtype=float)
        beta = np.full((m, m), float(beta)) if beta.ndim == 0 else beta.reshape(m, m)
        return cls(mu, BranchingMatrix(a, mask), KernelSpec(beta), alpha if alpha is not None else Constant(1.0))

    @property
    def n_nodes(self) -> int:
        return self.mu.shape[0]

    @property
    def A(self) -> np.ndarray:
        return self.a.a

    @property
    def beta(self) -> np.ndarray:
        return self.kernel.beta

    def with_branching(self, a, mask=None) -> "ModelSpec":
        mask = self.a.mask if mask is None else mask
        return ModelSpec(self.mu, BranchingMatrix(a, mask), self.kernel, self.alpha)

    def with_multiplier(self, alpha: EnvMultiplier) -> "ModelSpec":
        return ModelSpec(self.mu, self.a, self.kernel, alpha)

    def with_mu(self, mu) -> "ModelSpec":
        return ModelSpec(np.broadcast_to(np.asarray(mu, dtype=float), self.mu.shape), self.a, self.kernel, self.alpha)


# ---------------------------------------------------------------------------
# data containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EventStream:
    """Strictly time-ordered marked events on ``[0, horizon]``.

    ``seed`` flags conditioned-on events: they excite later events but are
    never attributed to a parent in likelihoods or cluster statistics.
    """

    times: np.ndarray
    nodes: np.ndarray
    n_nodes: int
    horizon: float | None = None
    seed: np.ndarray | None = None

    def __post_init__(self):
        times = _frozen(np.atleast_1d(np.asarray(self.times, dtype=float)).ravel())
        nodes = _frozen(np.atleast_1d(np.asarray(self.nodes)).ravel(), dtype=np.int64)
        n = times.shape[0]
        if nodes.shape[0] != n:
            raise PreconditionError("times and nodes have different lengths")
        if self.n_nodes < 1:
            raise PreconditionError("n_nodes must be >= 1")
        if n:
            if not np.all(np.isfinite(times)) or times[0] < 0:
                raise PreconditionError("event times must be finite and >= 0")
            if np.any(np.diff(times) <= 0):
                k = int(np.argmax(np.diff(times) <= 0)) + 1
                raise PreconditionError(f"event times must be strictly increasing (violated at index {k})")
            if nodes.min() < 0 or nodes.max() >= self.n_nodes:
                raise PreconditionError(f"node index out of range 0..{self.n_nodes - 1}")
        horizon = float(times[-1]) if (self.horizon is None and n) else float(self.horizon or 0.0)
        if n and horizon < times[-1]:
            raise PreconditionError(f"horizon {horizon} precedes the last event at {times[-1]}")
        seed = np.zeros(n, dtype=bool) if self.seed is None else np.asarray(self.seed, dtype=bool).ravel()
        if seed.shape[0] != n:
            raise PreconditionError("seed mask has the wrong length")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "seed", _frozen(seed, dtype=bool))
        object.__setattr__(self, "n_nodes", int(self.n_nodes))

    @classmethod
    def from_events(
        cls,
        events: Iterable[tuple[float, int]],
        n_nodes: int,
        horizon: float | None = None,
        seed: Sequence[bool] | None = None,
        nudge_ties: bool = True,
    ) -> "EventStream":
        """Sort ``(time, node)`` pairs; ties are pushed later by 1e-9 days."""
        ev = list(events)
        flags = [False] * len(ev) if seed is None else list(seed)
        if len(flags) != len(ev):
            raise PreconditionError("seed mask has the wrong length")
        order = sorted(range(len(ev)), key=lambda k: (float(ev[k][0]), int(ev[k][1])))
        times = np.array([float(ev[k][0]) for k in order], dtype=float)
        nodes = np.array([int(ev[k][1]) for k in order], dtype=np.int64)
        flags = np.array([flags[k] for k in order], dtype=bool)
        if nudge_ties:
            times = nudge_ties_forward(times)
        if horizon is not None and times.size and times[-1] > horizon:
            horizon = float(times[-1])
        return cls(times, nodes, n_nodes, horizon, flags)

    def __len__(self):
        return int(self.times.shape[0])

    def before(self, t: float) -> "EventStream":
        k = int(np.searchsorted(self.times, t, side="left"))
        return EventStream(self.times[:k], self.nodes[:k], self.n_nodes, min(self.horizon, t), self.seed[:k])

    def counts(self) -> np.ndarray:
        return np.bincount(self.nodes, minlength=self.n_nodes)


def nudge_ties_forward(times: np.ndarray, eps: float = TIE_NUDGE) -> np.ndarray:
    """Make sorted times strictly increasing by pushing each tie ``eps`` later."""
    times = np.array(times, dtype=float, copy=True)
    for k in range(1, times.shape[0]):
        if times[k] <= times[k - 1]:
            times[k] = times[k - 1] + eps
    return times


@dataclass(frozen=True, eq=False)
class BinnedCounts:
    """Counts per uniform bin: bin ``i`` covers ``[origin + i*delta, origin + (i+1)*delta)``.

    ``seed_counts`` are the conditioned-on events inside ``counts``; they act
    only as triggers during estimation. ``labels`` are optional bin names
    (dates for daily data).
    """

    delta: float
    counts: np.ndarray
    origin: float = 0.0
    seed_counts: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise PreconditionError(f"bin size must be > 0, got {self.delta}")
        counts = np.atleast_2d(np.asarray(self.counts))
        if counts.ndim != 2:
            raise PreconditionError("counts must be an L x M matrix")
        if counts.size and (np.any(counts < 0) or np.any(counts != np.round(counts))):
            raise PreconditionError("counts must be nonnegative integers")
        counts = _frozen(counts, dtype=np.int64)
        seed = np.zeros_like(counts) if self.seed_counts is None else np.asarray(self.seed_counts, dtype=np.int64)
        if seed.shape != counts.shape or np.any(seed < 0) or np.any(seed > counts):
            raise PreconditionError("seed_counts must match counts and not exceed them")
        if self.labels is not None and len(self.labels) != counts.shape[0]:
            raise PreconditionError("labels must have one entry per bin")
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "origin", float(self.origin))
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "seed_counts", _frozen(seed, dtype=np.int64))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def n_bins(self) -> int:
        return int(self.counts.shape[0])

    @property
    def n_nodes(self) -> int:
        return int(self.counts.shape[1])

    def head(self, n_bins: int) -> "BinnedCounts":
        labels = None if self.labels is None else self.labels[:n_bins]
        return BinnedCounts(self.delta, self.counts[:n_bins], self.origin, self.seed_counts[:n_bins], labels)

    def bin_start(self, i):
        return self.origin + np.asarray(i) * self.delta


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def kernel_integral(beta: float, a: float, b: float) -> float:
    """``int_a^b exp(-beta s) ds`` for ``0 <= a <= b`` (``b`` may be inf)."""
    if not beta > 0:
        raise DomainError(f"beta must be > 0, got {beta}")
    if a < 0 or a > b:
        raise DomainError(f"need 0 <= a <= b, got a={a}, b={b}")
    upper = 0.0 if math.isinf(b) else math.exp(-beta * b)
    return (math.exp(-beta * a) - upper) / beta


def _multiplier_columns(model: ModelSpec, t: float, nodes: np.ndarray) -> np.ndarray:
    """``alpha[i, u_j](t)`` as an (M, n) array."""
    alpha = model.alpha
    if alpha.is_scalar:
        return np.full((model.n_nodes, nodes.shape[0]), alpha.scalar(t))
    return alpha.matrix(t)[:, nodes]


def eval_intensity(model: ModelSpec, history: EventStream, t: float) -> np.ndarray:
    """Conditional intensity vector at ``t`` given events strictly before ``t``."""
    if t < 0:
        raise DomainError(f"intensity evaluated at t={t} < 0")
    if len(history) and history.times[-1] >= t:
        raise PreconditionError(f"history contains an event at {history.times[-1]} >= t={t}")
    lam = np.array(model.mu, dtype=float)
    if not len(history):
        return lam
    nodes = history.nodes
    lag = t - history.times
    terms = _multiplier_columns(model, t, nodes) * model.A[:, nodes] * np.exp(-model.beta[:, nodes] * lag)
    return lam + terms.sum(axis=1)


def _exact_excitation_integral(model: ModelSpec, i: int, v: int, tj: float, t: float) -> float:
    """``int_{tj}^{t} alpha_iv(s) exp(-beta_iv (s - tj)) ds``."""
    b = model.beta[i, v]
    alpha = model.alpha
    if isinstance(alpha, Constant):
        return alpha.value * kernel_integral(b, 0.0, t - tj)
    pts = [p for p in alpha.breakpoints() if tj < p < t]

    def f(s):
        return alpha.entry(s, i, v) * math.exp(-b * (s - tj))

    val, _ = integrate.quad(f, tj, t, points=pts or None, epsabs=1e-13, epsrel=1e-10, limit=200)
    return val


def compensator(model: ModelSpec, history: EventStream, t: float, mode: str = "paper") -> np.ndarray:
    """Integrated intensity on ``[0, t]`` per node.

    ``mode="paper"`` evaluates the multiplier once at the horizon ``t``,
    ``mu_i t + sum_j A_{i,u_j} d(t) / beta (1 - exp(-beta (t - t_j)))``,
    which is the form the EM surrogate uses. ``mode="exact"`` integrates the
    multiplier against the kernel by adaptive quadrature.
    """
    if t < 0:
        raise DomainError(f"compensator evaluated at t={t} < 0")
    if mode not in ("paper", "exact"):
        raise ConfigError(f"unknown compensator mode {mode!r}")
    out = np.array(model.mu, dtype=float) * t
    k = int(np.searchsorted(history.times, t, side="left"))
    if k == 0:
        return out
    tj = history.times[:k]
    nodes = history.nodes[:k]
    if mode == "paper":
        beta = model.beta[:, nodes]
        mult = _multiplier_columns(model, t, nodes)
        out += (mult * model.A[:, nodes] / beta * -np.expm1(-beta * (t - tj))).sum(axis=1)
        return out
    for i in range(model.n_nodes):
        for j in range(k):
            aij = model.A[i, nodes[j]]
            if aij:
                out[i] += aij * _exact_excitation_integral(model, i, int(nodes[j]), float(tj[j]), t)
    return out
