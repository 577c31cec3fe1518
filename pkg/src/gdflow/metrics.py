"""Point-adjusted F1 with threshold search, AUROC and AUPRC."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise ValueError(f"scores ({s.size}) and labels ({y.size}) differ in length")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0 or 1")
    return s, y.astype(np.int64)


def anomaly_segments(labels, segments=None) -> list[tuple[int, int]]:
    """Half-open ``[start, end)`` maximal runs of label 1.

    ``segments`` optionally assigns a group id per position (e.g. a profile id);
    a run never crosses a change of group.
    """
    y = np.asarray(labels).reshape(-1).astype(bool)
    breaks = np.zeros(y.size, dtype=bool)
    if segments is not None:
        g = np.asarray(segments).reshape(-1)
        if g.size != y.size:
            raise ValueError("segment ids and labels differ in length")
        breaks[1:] = g[1:] != g[:-1]
    runs = []
    start = None
    for i, flag in enumerate(y):
        if start is not None and (not flag or breaks[i]):
            runs.append((start, i))
            start = None
        if flag and start is None:
            start = i
    if start is not None:
        runs.append((start, y.size))
    return runs


def point_adjust(preds, labels, segments=None) -> np.ndarray:
    """Mark a whole anomaly run as detected once any of its positions is flagged."""
    p = np.asarray(preds).reshape(-1).astype(np.int64)
    y = np.asarray(labels).reshape(-1)
    if p.shape != y.shape:
        raise ValueError(f"preds ({p.size}) and labels ({y.size}) differ in length")
    out = p.copy()
    for a, b in anomaly_segments(y, segments):
        if out[a:b].any():
            out[a:b] = 1
    return out


def f1_score(preds, labels) -> float:
    p = np.asarray(preds).astype(bool)
    y = np.asarray(labels).astype(bool)
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    fn = int(np.sum(~p & y))
    return _f1(tp, fp, fn)


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 0.0 if denom == 0 else 2 * tp / denom


def f1_pa_at(scores, labels, tau: float, segments=None) -> float:
    s, y = _check(scores, labels)
    return f1_score(point_adjust((s > tau).astype(np.int64), y, segments), y)


def best_f1_search(scores, labels, segments=None) -> tuple[float, float]:
    """Threshold maximizing point-adjusted F1 over every distinct score and +-inf.

    A position is flagged when ``score > tau``. Ties go to the smallest tau.
    """
    s, y = _check(scores, labels)
    if y.min() == y.max():
        raise ValueError("best-F1 search needs both classes in labels")
    candidates = np.concatenate([[-np.inf], np.unique(s), [np.inf]])

    runs = anomaly_segments(y, segments)
    run_max = np.array([s[a:b].max() for a, b in runs])
    run_len = np.array([b - a for a, b in runs])
    order = np.argsort(run_max)
    run_max, run_len = run_max[order], run_len[order]
    # detected length for tau = total length of runs whose max exceeds tau
    tail_len = np.concatenate([np.cumsum(run_len[::-1])[::-1], [0]])
    tp = tail_len[np.searchsorted(run_max, candidates, side="right")]

    neg = np.sort(s[y == 0])
    fp = neg.size - np.searchsorted(neg, candidates, side="right")
    fn = int(y.sum()) - tp
    f1 = np.array([_f1(int(a), int(b), int(c)) for a, b, c in zip(tp, fp, fn)])
    best = int(np.argmax(f1))
    return float(candidates[best]), float(f1[best])


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC with midranks for ties."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes in labels")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: sum over thresholds of (recall step) x precision."""
    s, y = _check(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("AUPRC needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    k = np.arange(1, s.size + 1)
    # evaluate only at the last position of every run of tied scores
    last = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    tp, k = tp[last], k[last]
    precision = tp / k
    recall = tp / n_pos
    steps = np.diff(np.r_[0.0, recall])
    return float(np.sum(steps * precision))


def timestamp_scores(window_scores, starts, window: int, length: int) -> np.ndarray:
    """Spread window scores onto the timestamps they cover, taking the max on overlaps.

    Timestamps no window covers get the minimum window score.
    """
    ws = np.asarray(window_scores, dtype=np.float64)
    st = np.asarray(starts, dtype=np.int64)
    out = np.full(length, -np.inf)
    for sc, a in zip(ws, st):
        seg = out[a : a + window]
        np.maximum(seg, sc, out=seg)
    if ws.size:
        out[np.isneginf(out)] = ws.min()
    else:
        out[:] = 0.0
    return out


def evaluate(scores, labels, segments=None) -> dict[str, float]:
    tau, f1 = best_f1_search(scores, labels, segments)
    return {
        "f1_pa": f1,
        "tau": tau,
        "auroc": auroc(scores, labels),
        "auprc": auprc(scores, labels),
    }
