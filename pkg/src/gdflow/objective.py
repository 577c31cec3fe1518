"""Quantile-based likelihood objective, window scores and the threshold rule."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, as_tensor

SWEEP_QUANTILES = (0.01, 0.03, 0.05, 0.07, 0.1)


@dataclass(frozen=True)
class QuantileConfig:
    q: float = 0.05

    def __post_init__(self):
        if not 0.0 <= self.q < 1.0:
            raise ValueError(f"q must lie in [0, 1), got {self.q}")


class Decision(str, enum.Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"


@dataclass
class ScoreRecord:
    window_id: int
    score: float
    sensor_lls: np.ndarray
    decision: Decision | None = None
    profile_id: str = ""
    start: int = 0


def _order_weights(sorted_vals: np.ndarray, q: float) -> tuple[float, np.ndarray]:
    m = sorted_vals.size
    pos = q * (m - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, m - 1)
    frac = pos - lo
    value = sorted_vals[lo] + frac * (sorted_vals[hi] - sorted_vals[lo])
    weights = np.zeros(m)
    weights[lo] += 1.0 - frac
    weights[hi] += frac
    # ties share the gradient equally
    starts = np.flatnonzero(np.r_[True, sorted_vals[1:] != sorted_vals[:-1]])
    if starts.size < m:
        group_sum = np.add.reduceat(weights, starts)
        sizes = np.diff(np.r_[starts, m])
        weights = np.repeat(group_sum / sizes, sizes)
    return float(value), weights


def quantile(values, q: float) -> Tensor:
    """Linear-interpolation q-quantile of all entries, differentiable through the order statistics."""
    v = as_tensor(values)
    if v.size == 0:
        raise ValueError("quantile of an empty set")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    flat = v.data.reshape(-1)
    order = np.argsort(flat, kind="stable")
    value, sorted_weights = _order_weights(flat[order], q)
    weights = np.empty_like(sorted_weights)
    weights[order] = sorted_weights
    shape = v.shape

    def bw(g):
        return (g * weights.reshape(shape),)

    return Tensor._make(np.asarray(value), (v,), bw, "quantile")


def q_nll_loss(lls, q: float) -> Tensor:
    """Negated q-quantile of the log-likelihoods."""
    lls = as_tensor(lls)
    if lls.size == 0:
        raise ValueError("empty batch of log-likelihoods")
    return -quantile(lls, q)


def mean_nll_loss(lls) -> Tensor:
    lls = as_tensor(lls)
    if lls.size == 0:
        raise ValueError("empty batch of log-likelihoods")
    return -lls.mean()


def window_scores(sensor_lls: np.ndarray, q: float | None) -> np.ndarray:
    """Anomaly score per window from ``(b, n)`` sensor log-likelihoods.

    ``q=None`` selects the mean-likelihood score of the no-quantile variant.
    """
    lls = np.asarray(sensor_lls, dtype=np.float64)
    if lls.ndim != 2 or lls.shape[1] == 0:
        raise ValueError(f"expected (windows, sensors) log-likelihoods, got {lls.shape}")
    if q is None:
        return -lls.mean(axis=1)
    return -np.quantile(lls, q, axis=1, method="linear")


def score_window(model, window, window_id: int = 0) -> ScoreRecord:
    """Score a single ``(n, w)`` window with a trained model."""
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"window must be (sensors, samples), got {x.shape}")
    if x.shape[1] != model.config.window:
        raise ValueError(f"window width {x.shape[1]} does not match model width {model.config.window}")
    lls = model.log_likelihoods(x[None])[0]
    q = None if model.config.no_quantile else model.config.q
    score = float(window_scores(lls[None], q)[0])
    decision = classify(score, model.tau) if model.tau is not None else None
    return ScoreRecord(window_id=window_id, score=score, sensor_lls=lls, decision=decision)


def classify(score: float, tau: float) -> Decision:
    return Decision.NORMAL if score <= tau else Decision.ANOMALOUS
