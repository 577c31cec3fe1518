"""Natural cubic spline paths over unit-spaced knots."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class SplinePath:
    """Piecewise cubic ``a + b u + c u^2 + d u^3`` with ``u = t - k`` on ``[k, k+1]``.

    Coefficient arrays have shape ``(..., w - 1)``; the leading axes are
    channels (sensors, batch, ...).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def n_knots(self) -> int:
        return self.a.shape[-1] + 1

    @property
    def span(self) -> tuple[float, float]:
        return 0.0, float(self.n_knots - 1)

    def knot_derivatives(self) -> np.ndarray:
        """dX/dt at knots ``0 .. w-2`` (left end of every interval)."""
        return self.b


@lru_cache(maxsize=64)
def _thomas_factors(m: int) -> tuple[np.ndarray, np.ndarray]:
    # forward-elimination factors for the constant tridiagonal (1, 4, 1) system
    cprime = np.empty(m)
    denom = np.empty(m)
    cprime[0] = 1.0 / 4.0
    denom[0] = 4.0
    for i in range(1, m):
        denom[i] = 4.0 - cprime[i - 1]
        cprime[i] = 1.0 / denom[i]
    return cprime, denom


def _second_derivatives(y: np.ndarray) -> np.ndarray:
    w = y.shape[-1]
    M = np.zeros_like(y)
    m = w - 2
    if m <= 0:
        return M
    rhs = 6.0 * (y[..., 2:] - 2.0 * y[..., 1:-1] + y[..., :-2])
    cprime, denom = _thomas_factors(m)
    dprime = np.empty_like(rhs)
    dprime[..., 0] = rhs[..., 0] / denom[0]
    for i in range(1, m):
        dprime[..., i] = (rhs[..., i] - dprime[..., i - 1]) / denom[i]
    sol = np.empty_like(rhs)
    sol[..., -1] = dprime[..., -1]
    for i in range(m - 2, -1, -1):
        sol[..., i] = dprime[..., i] - cprime[i] * sol[..., i + 1]
    M[..., 1:-1] = sol
    return M


def fit(window) -> SplinePath:
    """Fit a natural cubic spline through samples on the last axis at t = 0, 1, ..., w-1."""
    y = np.asarray(window, dtype=np.float64)
    if y.ndim == 0 or y.shape[-1] < 2:
        raise ValueError(f"need at least 2 samples per channel, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("window contains non-finite samples")
    M = _second_derivatives(y)
    a = y[..., :-1]
    b = (y[..., 1:] - y[..., :-1]) - (2.0 * M[..., :-1] + M[..., 1:]) / 6.0
    c = M[..., :-1] / 2.0
    d = (M[..., 1:] - M[..., :-1]) / 6.0
    return SplinePath(a.copy(), b, c, d)


def _locate(path: SplinePath, t) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=np.float64)
    lo, hi = path.span
    if np.any(~np.isfinite(t)) or np.any(t < lo) or np.any(t > hi):
        raise ValueError(f"t outside spline span [{lo}, {hi}]")
    k = np.minimum(np.floor(t).astype(int), path.n_knots - 2)
    return k, t - k


def eval(path: SplinePath, t) -> np.ndarray:  # noqa: A001 - mirrors the path API
    """Value at ``t`` per channel; array ``t`` adds a trailing axis."""
    k, u = _locate(path, t)
    a, b, c, d = path.a[..., k], path.b[..., k], path.c[..., k], path.d[..., k]
    return a + u * (b + u * (c + u * d))


def eval_derivative(path: SplinePath, t) -> np.ndarray:
    k, u = _locate(path, t)
    b, c, d = path.b[..., k], path.c[..., k], path.d[..., k]
    return b + u * (2.0 * c + 3.0 * u * d)


def eval_second_derivative(path: SplinePath, t) -> np.ndarray:
    k, u = _locate(path, t)
    return 2.0 * path.c[..., k] + 6.0 * u * path.d[..., k]
