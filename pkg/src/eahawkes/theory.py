"""Numerical theory for EAH models.

* ``m(u)``, the mean number of direct offspring of an event at ``u``, and
  the resulting stability check and intensity bound ``mu / (1 - sup m)``.
* The survivor function of the forward recurrence (residual) time.
* The distribution of a cluster's length, solved by Picard iteration.
* Monte-Carlo estimators of the same quantities, built on the branching
  simulator, used as independent oracles.

The residual-time and cluster-length routines are univariate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _backend
from .core import Constant, ModelSpec
from .errors import ConfigError, TheoryError

TAIL_EPS = 1e-10
QUAD_RTOL = 1e-8


# ---------------------------------------------------------------------------
# first-generation means and stability
# ---------------------------------------------------------------------------


def _alpha_bound(model, i, j, u):
    """Upper bound of ``alpha_ij`` on ``[u, inf)``."""
    alpha = model.alpha
    if alpha.is_nonincreasing():
        return alpha.entry(u, i, j)
    return float(alpha.envelope[i, j]) if alpha.envelope is not None else None


def _excitation_mass(model: ModelSpec, i: int, j: int, u: float, upper: float = math.inf) -> float:
    """``A_ij * int_u^upper alpha_ij(t) exp(-beta_ij (t - u)) dt`` by adaptive quadrature."""
    a = model.A[i, j]
    if a == 0.0:
        return 0.0
    b = model.beta[i, j]
    alpha = model.alpha
    if isinstance(alpha, Constant):
        span = upper - u
        return a * alpha.value * (-math.expm1(-b * span) if math.isfinite(span) else 1.0) / b
    if math.isinf(upper):
        bound = _alpha_bound(model, i, j, u)
        if bound is None:
            raise ConfigError("non-monotone multiplier needs an envelope to truncate the tail")
        # stop where a * bound * exp(-b T) / b < TAIL_EPS
        upper = u + max(math.log(max(a * bound / (b * TAIL_EPS), 1.0)) / b, 1.0 / b)
    pts = [p for p in alpha.breakpoints() if u < p < upper]
    val, _ = integrate.quad(
        lambda t: alpha.entry(t, i, j) * math.exp(-b * (t - u)),
        u,
        upper,
        points=pts or None,
        epsrel=QUAD_RTOL,
        epsabs=1e-14,
        limit=500,
    )
    return a * val


def first_generation_matrix(model: ModelSpec, u: float) -> np.ndarray:
    """``m_ij(u)``: expected children in node ``i`` of an event in node ``j`` at ``u``."""
    m = model.n_nodes
    return np.array([[_excitation_mass(model, i, j, u) for j in range(m)] for i in range(m)])


def mean_first_generation(model: ModelSpec, u: float) -> float:
    """``m(u) = A int alpha(t) exp(-beta (t - u)) dt`` for a univariate model."""
    if model.n_nodes != 1:
        raise ConfigError("mean_first_generation is univariate; use stability_check for multivariate models")
    return _excitation_mass(model, 0, 0, float(u))


@dataclass(frozen=True, eq=False)
class TheoryReport:
    """Stability summary over a grid of parent arrival times.

    ``m_values`` are the largest row sums of ``m_ij(u)`` (equal to ``m(u)``
    for univariate models). ``spectral_radius`` is the largest spectral
    radius of ``m_ij(u)`` over the grid; it is informational and does not
    gate ``stable``.
    """

    u_grid: np.ndarray
    m_values: np.ndarray
    sup_m: float
    stable: bool
    intensity_bound: float
    spectral_radius: float

    def to_dict(self):
        return {
            "u_grid": [float(x) for x in self.u_grid],
            "m_values": [float(x) for x in self.m_values],
            "sup_m": float(self.sup_m),
            "stable": bool(self.stable),
            "intensity_bound": float(self.intensity_bound) if math.isfinite(self.intensity_bound) else "inf",
            "spectral_radius": float(self.spectral_radius),
        }


def default_u_grid(model: ModelSpec) -> np.ndarray:
    if isinstance(model.alpha, Constant):
        return np.array([0.0])
    grid = np.linspace(0.0, 60.0, 121)
    return np.unique(np.concatenate([grid, [b for b in model.alpha.breakpoints() if b <= 60.0]]))


def stability_check(model: ModelSpec, u_grid=None) -> TheoryReport:
    """Sup over ``u`` of the first-generation mean and the intensity bound.

    For nonincreasing multipliers ``m(u)`` is nonincreasing, so values
    beyond the grid never exceed the last grid value; otherwise the
    envelope gives the tail bound ``A * envelope / beta``.
    """
    u_grid = default_u_grid(model) if u_grid is None else np.atleast_1d(np.asarray(u_grid, dtype=float))
    mats = [first_generation_matrix(model, u) for u in u_grid]
    m_values = np.array([mat.sum(axis=1).max() for mat in mats])
    rho = max(float(np.max(np.abs(np.linalg.eigvals(mat)))) for mat in mats)
    sup_m = float(m_values.max())
    if not model.alpha.is_nonincreasing():
        env = model.alpha.envelope
        if env is None:
            raise ConfigError("non-monotone multiplier needs an envelope for the stability tail bound")
        sup_m = max(sup_m, float((model.A * env / model.beta).sum(axis=1).max()))
    stable = sup_m < 1.0
    mu_max = float(model.mu.max())
    bound = mu_max / (1.0 - sup_m) if stable else math.inf
    return TheoryReport(u_grid, m_values, sup_m, stable, bound, rho)


def _require_stable_univariate(model, what):
    if model.n_nodes != 1:
        raise ConfigError(f"{what} is implemented for univariate models")
    if not stability_check(model).stable:
        raise TheoryError(f"{what} needs a stable model (sup m(u) < 1)")


# ---------------------------------------------------------------------------
# residual (forward recurrence) time
# ---------------------------------------------------------------------------


def _window_mass_at_y(model, y, l):
    """``A int_y^{y+l} alpha(tau) exp(-beta (tau - y)) dtau``."""
    return _excitation_mass(model, 0, 0, y, y + l)


def residual_time_survivor(
    model: ModelSpec,
    y: float,
    l: float,
    method: str = "fixed_point",
    step: float = 0.01,
    origin: float | None = None,
) -> float:
    """``P(no event in (y, y + l))`` for a univariate EAH process.

    Immigrants arrive on ``(origin, inf)``; ``origin`` defaults to ``-inf``
    for a constant multiplier and to 0 otherwise. A cluster rooted at
    ``t <= y`` avoids the window with probability ``gamma(t)``, and

        R(l) = exp(mu * int_origin^y (gamma(t) - 1) dt - mu * l).

    ``method="fixed_point"`` solves the cluster equation

        log gamma(t) = int_t^y (gamma(tau) - 1) a(tau) phi(tau - t) dtau
                       - int_y^{y+l} a(tau) phi(tau - t) dtau,

    with ``a = A alpha``, marching backwards from ``t = y`` with the
    trapezoid rule on a grid of spacing ``step``. ``method="closed_form"``
    keeps only the second term, i.e. ignores offspring born before ``y``
    whose own descendants land in the window; it overestimates ``R`` for
    any model with nonzero excitation.
    """
    y, l = float(y), float(l)
    if y < 0 or l < 0:
        raise ConfigError("y and l must be >= 0")
    if method not in ("fixed_point", "closed_form"):
        raise ConfigError(f"unknown residual-time method {method!r}")
    _require_stable_univariate(model, "residual_time_survivor")
    mu = float(model.mu[0])
    if l == 0.0:
        return 1.0
    if origin is None:
        origin = -math.inf if isinstance(model.alpha, Constant) else 0.0
    if math.isinf(origin) and not isinstance(model.alpha, Constant):
        raise ConfigError("an infinite past needs a constant multiplier")
    if origin > y:
        raise ConfigError("origin must not exceed y")
    b = float(model.beta[0, 0])
    w_y = _window_mass_at_y(model, y, l)
    if w_y == 0.0 or mu == 0.0:
        return math.exp(-mu * l)

    if method == "closed_form":
        def f(t):
            return math.expm1(-w_y * math.exp(-b * (y - t)))

        lo = origin if math.isfinite(origin) else -np.inf
        val, _ = integrate.quad(f, lo, y, epsrel=QUAD_RTOL, epsabs=1e-14, limit=500)
        return math.exp(mu * val - mu * l)

    integral = _residual_fixed_point_integral(model, y, w_y, step, origin)
    return math.exp(mu * integral - mu * l)


def _residual_fixed_point_integral(model, y, w_y, step, origin):
    """``int_origin^y (gamma(t) - 1) dt`` for the full cluster equation."""
    b = float(model.beta[0, 0])
    A = float(model.A[0, 0])
    alpha = model.alpha
    finite = math.isfinite(origin)
    if finite:
        n_steps = max(1, int(math.ceil((y - origin) / step - 1e-9)))
        h = (y - origin) / n_steps
    else:
        h = step
        n_steps = None
    decay_h = math.exp(-b * h)

    def a_of(t):
        return A * (alpha.value if isinstance(alpha, Constant) else alpha.entry(t, 0, 0))

    # march t_k = y - k h backwards; I_k = int_{t_k}^y f(tau) e^{-b(tau - t_k)} dtau
    t = y
    a_k = a_of(t)
    gamma = math.exp(-w_y)
    f_k = (gamma - 1.0) * a_k
    I_k = 0.0
    w_k = w_y
    total = 0.0
    prev = gamma - 1.0
    k = 0
    while True:
        k += 1
        t_next = y - k * h
        a_n = a_of(t_next)
        w_k *= decay_h
        base = decay_h * I_k + 0.5 * h * f_k * decay_h - w_k
        g = math.exp(base)
        for _ in range(100):
            g_new = math.exp(base + 0.5 * h * a_n * (g - 1.0))
            if abs(g_new - g) < 1e-16:
                g = g_new
                break
            g = g_new
        f_n = (g - 1.0) * a_n
        I_k = decay_h * I_k + 0.5 * h * (f_n + f_k * decay_h)
        f_k = f_n
        cur = g - 1.0
        total += 0.5 * h * (prev + cur)
        prev = cur
        if finite:
            if k >= n_steps:
                break
        elif abs(cur) < 1e-14 and abs(I_k) < 1e-14 and w_k < 1e-14:
            # gamma - 1 decays like exp(-b (y - t)) beyond this point
            total += cur / b
            break
        elif k > 10**7:
            raise TheoryError("residual-time recursion did not reach its tail", residual=abs(cur))
    return total


# ---------------------------------------------------------------------------
# cluster length
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LengthGrid:
    """``d_values[a, j] = P(J_{t_a} <= y_j)`` for a cluster rooted at ``t_a``."""

    t_grid: np.ndarray
    y_grid: np.ndarray
    d_values: np.ndarray
    iterations: int
    residual: float

    def to_dict(self):
        return {
            "t_grid": [float(x) for x in self.t_grid],
            "y_grid": [float(x) for x in self.y_grid],
            "d_values": [[float(v) for v in row] for row in self.d_values],
            "iterations": int(self.iterations),
            "residual": float(self.residual),
        }


def _product_trapezoid_weights(b, h, n):
    """Node weights for ``int_0^{jh} f(s) exp(-b s) ds`` with ``f`` linear per step."""
    e0 = -math.expm1(-b * h) / b
    e1 = (-math.expm1(-b * h) - b * h * math.exp(-b * h)) / b**2
    w1 = e1 / h
    w0 = e0 - w1
    k = np.arange(n, dtype=float)
    w_last = np.exp(-b * (k - 1) * h) * w1
    w_mid = w_last + np.exp(-b * k * h) * w0
    w_last[0] = w_mid[0] = 0.0
    return w0, w_mid, w_last


def cluster_length_cdf(
    model: ModelSpec,
    t_max: float = 20.0,
    y_max: float = 20.0,
    h_t: float = 0.05,
    h_y: float = 0.05,
    tol: float = 1e-8,
    max_iter: int = 10_000,
) -> LengthGrid:
    """Solve the cluster-length fixed point on a ``(t, y)`` grid by Picard iteration.

        D(t, y) = exp(-m(t) + int_t^{t+y} D(tau, y + t - tau) alpha(tau) phi(tau - t) dtau)

    starting from ``D = exp(-m(t))``. The t-grid is extended to
    ``t_max + y_max`` internally so that every value the integral needs
    for ``t <= t_max`` lies on the grid. Each sweep must not decrease any
    entry (the map is monotone); a violation or non-convergence raises
    :class:`TheoryError`.
    """
    _require_stable_univariate(model, "cluster_length_cdf")
    if not (h_t > 0 and h_y > 0 and t_max >= 0 and y_max > 0):
        raise ConfigError("grid steps must be > 0 and extents nonnegative")
    nt = int(round(t_max / h_t)) + 1
    ny = int(round(y_max / h_y)) + 1
    nt_ext = int(round((t_max + y_max) / h_t)) + 1
    t_ext = np.arange(nt_ext) * h_t
    y_grid = np.arange(ny) * h_y
    b = float(model.beta[0, 0])
    A = float(model.A[0, 0])
    alpha = model.alpha

    if isinstance(alpha, Constant):
        m_vals = np.full(nt_ext, A * alpha.value / b)
        g = np.full((nt_ext, ny), A * alpha.value)
    else:
        m_vals = np.array([_excitation_mass(model, 0, 0, float(t)) for t in t_ext])
        tau = t_ext[:, None] + y_grid[None, :]
        g = A * alpha.scalar(tau.ravel()).reshape(tau.shape)
    w_first, w_mid, w_last = _product_trapezoid_weights(b, h_y, ny)
    ratio = h_y / h_t

    D = np.repeat(np.exp(-m_vals)[:, None], ny, axis=1)
    kern = _backend.kernels
    residual = math.inf
    for it in range(1, max_iter + 1):
        new = kern.picard_sweep(D, m_vals, g, w_first, w_mid, w_last, ratio)
        if np.any(new < D - 1e-12):
            raise TheoryError("Picard iterate decreased; the scheme lost monotonicity", residual=residual)
        residual = float(np.max(np.abs(new - D)))
        D = new
        if residual < tol:
            break
    else:
        raise TheoryError(f"cluster-length Picard iteration did not converge in {max_iter} sweeps", residual=residual)
    return LengthGrid(t_ext[:nt].copy(), y_grid, D[:nt].copy(), it, residual)


# ---------------------------------------------------------------------------
# Monte-Carlo oracles
# ---------------------------------------------------------------------------


def _scalar_branching_fn(model):
    """Fast path for repeated branching runs of one scalar-multiplier model."""
    from .simulate import branching_raw

    if model.alpha.is_scalar:
        table = model.alpha.table()
        kern = _backend.kernels

        def run(horizon, root_t, root_node, rng, cap):
            out = kern.branching_scalar(model.mu, model.A, model.beta, table, root_t, root_node, horizon, rng, cap)
            if out[4]:
                from .errors import ExplosionError

                raise ExplosionError(cap)
            return out[0], out[1], out[2], out[3]

        return run
    return lambda horizon, rt, rn, rng, cap: branching_raw(model, horizon, rt, rn, rng, cap)


def mc_residual_time(model: ModelSpec, y: float, l: float, replicates: int = 100_000, rng_seed: int = 0):
    """Fraction of branching realizations on ``[0, y + l)`` with no event in ``(y, y + l)``.

    Replicate ``r`` uses its own generator seeded with ``rng_seed + r``.
    Returns ``(probability, standard_error)``.
    """
    _require_stable_univariate(model, "mc_residual_time")
    if l == 0:
        return 1.0, 0.0
    run = _scalar_branching_fn(model)
    empty_root = np.empty(0)
    empty_node = np.empty(0, dtype=np.int64)
    hits = 0
    for r in range(replicates):
        times = run(y + l, empty_root, empty_node, np.random.default_rng(rng_seed + r), 10**6)[0]
        if not np.any(times > y):
            hits += 1
    p = hits / replicates
    return p, math.sqrt(max(p * (1 - p), 1e-300) / replicates)


def cluster_lengths(model: ModelSpec, t: float, replicates: int, rng_seed: int = 0, horizon_pad: float | None = None):
    """Lengths of ``replicates`` independent clusters rooted at ``t`` (immigration off)."""
    _require_stable_univariate(model, "cluster_lengths")
    quiet = model.with_mu(0.0)
    b = float(model.beta.min())
    pad = 40.0 / b if horizon_pad is None else horizon_pad
    run = _scalar_branching_fn(quiet)
    roots = np.full(replicates, float(t))
    times, nodes, parents, n_imm = run(t + pad, roots, np.zeros(replicates, dtype=np.int64), np.random.default_rng(rng_seed), 10**8)
    root_of = np.arange(len(times))
    for k in range(replicates, len(times)):
        root_of[k] = root_of[parents[k]]
    last = np.full(replicates, float(t))
    np.maximum.at(last, root_of, times)
    return last - t


def mc_cluster_length(model: ModelSpec, t: float, y_grid, replicates: int = 100_000, rng_seed: int = 0) -> np.ndarray:
    """Empirical ``P(J_t <= y)`` on ``y_grid`` from simulated clusters."""
    lengths = np.sort(cluster_lengths(model, t, replicates, rng_seed))
    y_grid = np.asarray(y_grid, dtype=float)
    return np.searchsorted(lengths, y_grid, side="right") / replicates


def mc_mean_intensity(model: ModelSpec, horizon: float, replicates: int = 1000, rng_seed: int = 0):
    """Per-node mean event rate on ``[0, horizon)`` over branching replicates.

    Returns ``(mean, standard_error)`` arrays of length ``M``.
    """
    run = _scalar_branching_fn(model)
    m = model.n_nodes
    rates = np.empty((replicates, m))
    for r in range(replicates):
        _, nodes, _, _ = run(horizon, np.empty(0), np.empty(0, dtype=np.int64), np.random.default_rng(rng_seed + r), 10**6)
        rates[r] = np.bincount(nodes, minlength=m) / horizon
    return rates.mean(axis=0), rates.std(axis=0, ddof=1) / math.sqrt(replicates)
