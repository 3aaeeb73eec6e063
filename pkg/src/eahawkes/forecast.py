"""One-step-ahead expected counts from binned history.

Events of bin ``j`` are placed at the bin center ``(j + 1/2) delta``; the
kernel is integrated exactly over the next bin and the multiplier is
evaluated at that bin's midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BinnedCounts, ModelSpec
from .errors import PreconditionError


@dataclass(frozen=True, eq=False)
class PredictionSeries:
    """Predicted (and observed) counts for bins ``bins[0] .. bins[-1]``."""

    bins: np.ndarray
    predicted: np.ndarray
    observed: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if np.any(self.predicted < 0):
            raise PreconditionError("predicted counts must be nonnegative")

    def rmse(self, from_bin: int | None = None, node: int | None = None) -> np.ndarray | float:
        """Per-node RMSE over bins ``>= from_bin`` (or one node's, if given)."""
        if self.observed is None:
            raise PreconditionError("no observed counts attached")
        sel = slice(None) if from_bin is None else self.bins >= from_bin
        err = np.sqrt(np.mean((self.predicted[sel] - self.observed[sel]) ** 2, axis=0))
        return float(err[node]) if node is not None else err

    def bias(self, from_bin: int | None = None) -> np.ndarray:
        """Per-node mean of ``predicted - observed`` over bins ``>= from_bin``."""
        if self.observed is None:
            raise PreconditionError("no observed counts attached")
        sel = slice(None) if from_bin is None else self.bins >= from_bin
        return np.mean(self.predicted[sel] - self.observed[sel], axis=0)


def _center_weights(beta: np.ndarray, delta: float, lags: np.ndarray) -> np.ndarray:
    """``int exp(-beta s) ds`` over ``[(k - 1/2) delta, (k + 1/2) delta]`` for each lag ``k >= 1``.

    Shape ``(M, M, len(lags))``.
    """
    b = beta[:, :, None]
    lo = (lags - 0.5) * delta
    return (np.exp(-b * lo) - np.exp(-b * (lo + delta))) / b


def _excitation_next(model: ModelSpec, counts: np.ndarray, delta: float, t_mid: float) -> np.ndarray:
    L = counts.shape[0]
    m = model.n_nodes
    if L == 0:
        return np.zeros(m)
    lags = L - np.arange(L)
    W = _center_weights(model.beta, delta, lags.astype(float))
    mass = np.einsum("uvj,jv->uv", W, counts.astype(float))
    alpha = model.alpha
    mult = np.full((m, m), float(alpha.scalar(t_mid))) if alpha.is_scalar else alpha.matrix(t_mid)
    return (mult * model.A * mass).sum(axis=1)


def predict_one_step(model: ModelSpec, history: BinnedCounts, next_bin: int) -> np.ndarray:
    """Expected counts per node in bin ``next_bin`` given every earlier bin.

    ``next_bin`` must directly follow the history.
    """
    if next_bin != history.n_bins:
        raise PreconditionError(f"next_bin must be {history.n_bins} (the bin after the history), got {next_bin}")
    if history.n_nodes != model.n_nodes:
        raise PreconditionError("history and model disagree on the number of nodes")
    delta = history.delta
    t_mid = history.origin + (next_bin + 0.5) * delta
    return model.mu * delta + _excitation_next(model, history.counts, delta, t_mid)


def rolling_one_step(model: ModelSpec, binned: BinnedCounts, start: int = 1, end: int | None = None) -> PredictionSeries:
    """Predict each bin in ``[start, end)`` from the observed bins before it."""
    if binned.n_nodes != model.n_nodes:
        raise PreconditionError(f"counts have {binned.n_nodes} nodes but the model has {model.n_nodes}")
    end = binned.n_bins if end is None else end
    if not (1 <= start < end <= binned.n_bins):
        raise PreconditionError(f"need 1 <= start < end <= {binned.n_bins}, got start={start}, end={end}")
    bins = np.arange(start, end)
    pred = np.empty((bins.size, model.n_nodes))
    delta = binned.delta
    for k, r in enumerate(bins):
        t_mid = binned.origin + (r + 0.5) * delta
        pred[k] = model.mu * delta + _excitation_next(model, binned.counts[:r], delta, t_mid)
    labels = None if binned.labels is None else tuple(binned.labels[r] for r in bins)
    return PredictionSeries(bins, pred, binned.counts[start:end].astype(float), labels)
