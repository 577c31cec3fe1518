"""The detector: encoder + flow, its training loop and corpus scoring."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .config import RunConfig
from .data import NormStats, Profile, WindowBatch, iter_batches, normalize, window_corpus
from .encoder import NCDEEncoder
from .flow import Flow, log_likelihood
from .nn import Module
from .objective import mean_nll_loss, q_nll_loss, window_scores
from .optim import AdamW
from .tensor import NonFiniteError, Tensor, no_grad

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training diverged."""


class GdflowModel(Module):
    def __init__(self, config: RunConfig, n_sensors: int, window: int):
        self.config = config.replace(window=window)
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(1)[0])
        self.encoder = NCDEEncoder(
            rng,
            n_sensors,
            hidden=config.hidden,
            cheb_k=config.cheb_k,
            embed_dim=config.embed_dim,
            no_ncde=config.no_ncde,
        )
        self.flow = Flow(rng, config.hidden, n_blocks=config.flow_blocks, hidden=config.hidden)
        self.tau: float | None = None

    @property
    def score_q(self) -> float | None:
        return None if self.config.no_quantile else self.config.q

    def sensor_log_likelihoods(self, windows) -> Tensor:
        """Differentiable ``(b, n)`` log-likelihoods of a window batch."""
        return log_likelihood(self.encoder.encode(windows), self.flow)

    def loss(self, windows) -> Tensor:
        lls = self.sensor_log_likelihoods(windows)
        if self.config.no_quantile:
            return mean_nll_loss(lls)
        return q_nll_loss(lls, self.config.q)

    def log_likelihoods(self, windows: np.ndarray, batch_size: int | None = None) -> np.ndarray:
        windows = np.asarray(windows, dtype=np.float64)
        bs = batch_size or self.config.batch_size
        out = np.empty(windows.shape[:2])
        with no_grad():
            for a in range(0, windows.shape[0], bs):
                out[a : a + bs] = self.sensor_log_likelihoods(windows[a : a + bs]).data
        return out

    def scores(self, windows: np.ndarray) -> np.ndarray:
        if len(windows) == 0:
            return np.zeros(0)
        return window_scores(self.log_likelihoods(windows), self.score_q)


@dataclass
class EpochLog:
    epoch: int
    loss: float
    val_f1_pa: float | None = None
    val_auroc: float | None = None


@dataclass
class TrainResult:
    model: GdflowModel
    stats: NormStats
    history: list[EpochLog] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float | None = None


def shortest_length(profiles: Sequence[Profile]) -> int:
    return min(len(p) for p in profiles)


def prepare_windows(profiles: Sequence[Profile], stats: NormStats, config: RunConfig) -> WindowBatch:
    normed, _ = normalize(profiles, stats)
    return window_corpus(normed, config.window, config.stride)


def validation_metrics(model: GdflowModel, windows: WindowBatch) -> tuple[float, float] | None:
    if len(windows) == 0 or windows.labels.min() == windows.labels.max():
        return None
    scores = model.scores(windows.data)
    _, f1 = metrics.best_f1_search(scores, windows.labels, windows.profile_ids)
    return f1, metrics.auroc(scores, windows.labels)


def train(
    config: RunConfig,
    train_profiles: Sequence[Profile],
    val_profiles: Sequence[Profile] = (),
    on_epoch: Callable[[EpochLog], None] | None = None,
) -> TrainResult:
    """Fit on normal training profiles, keeping the epoch with the best validation F1-PA.

    Without a usable validation split the last epoch is kept.
    """
    train_profiles = [p for p in train_profiles if not p.label]
    if not train_profiles:
        raise ValueError("no normal training profiles")
    if config.window == 0:
        config = config.replace(window=shortest_length(list(train_profiles) + list(val_profiles)))
    _, stats = normalize(train_profiles, channels=config.channels)
    train_w = prepare_windows(train_profiles, stats, config)
    if len(train_w) == 0:
        raise ValueError(f"no training profile is at least {config.window} samples long")
    val_w = prepare_windows(val_profiles, stats, config) if val_profiles else None

    model = GdflowModel(config, len(config.channels), config.window)
    opt = AdamW(model.parameters(), lr=config.lr, weight_decay=config.weight_decay)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
    result = TrainResult(model, stats)
    best_state = model.state_dict()

    for epoch in range(1, config.epochs + 1):
        losses = []
        order = shuffle_rng.permutation(len(train_w))
        for step, batch in enumerate(iter_batches(train_w, config.batch_size, order)):
            try:
                loss = model.loss(batch.data)
            except NonFiniteError as exc:
                raise NumericalError(f"non-finite forward pass at epoch {epoch}, step {step}: {exc}") from exc
            opt.zero_grad()
            loss.backward()
            grads_ok = all(p.grad is None or np.all(np.isfinite(p.grad)) for p in opt.params)
            if not grads_ok:
                raise NumericalError(f"non-finite gradient at epoch {epoch}, step {step}")
            opt.step()
            losses.append(loss.item())
        entry = EpochLog(epoch, float(np.mean(losses)))
        vm = validation_metrics(model, val_w) if val_w is not None else None
        if vm is not None:
            entry.val_f1_pa, entry.val_auroc = vm
            if result.best_f1 is None or entry.val_f1_pa > result.best_f1:
                result.best_f1 = entry.val_f1_pa
                result.best_epoch = epoch
                best_state = model.state_dict()
        else:
            result.best_epoch = epoch
            best_state = model.state_dict()
        result.history.append(entry)
        log.info("epoch %d loss %.6f val_f1_pa %s", epoch, entry.loss, entry.val_f1_pa)
        if on_epoch:
            on_epoch(entry)

    model.load_state_dict(best_state)
    model.tau = default_threshold(model, train_w.data, config.expected_anomaly_rate)
    return result


def default_threshold(model: GdflowModel, train_windows: np.ndarray, expected_anomaly_rate: float) -> float:
    """Empirical (1 - expected rate) quantile of training-window scores."""
    scores = model.scores(train_windows)
    return float(np.quantile(scores, 1.0 - expected_anomaly_rate, method="linear"))


@dataclass
class ScoredWindows:
    profile_ids: list[str]
    starts: np.ndarray
    scores: np.ndarray
    labels: np.ndarray


def score_profiles(model: GdflowModel, profiles: Sequence[Profile], stats: NormStats) -> ScoredWindows:
    windows = prepare_windows(profiles, stats, model.config) if profiles else None
    if windows is None or len(windows) == 0:
        return ScoredWindows([], np.zeros(0, dtype=np.int64), np.zeros(0), np.zeros(0, dtype=np.int64))
    return ScoredWindows(windows.profile_ids, windows.starts, model.scores(windows.data), windows.labels)
