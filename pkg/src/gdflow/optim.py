"""AdamW with decoupled weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamWState:
    lr: float = 3e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 5e-4
    step: int = 0
    exp_avg: list[np.ndarray] = field(default_factory=list)
    exp_avg_sq: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, params, **hparams) -> AdamWState:
        state = cls(**hparams)
        state.exp_avg = [np.zeros(np.shape(_raw(p))) for p in params]
        state.exp_avg_sq = [np.zeros(np.shape(_raw(p))) for p in params]
        return state


def _raw(p):
    return p.data if isinstance(p, Tensor) else p


def adamw_step(params: list[np.ndarray], grads: list[np.ndarray | None], state: AdamWState) -> list[np.ndarray]:
    """Return updated copies of ``params``; ``state`` moments advance in place.

    A missing gradient counts as zero, so the parameter still decays.
    """
    if len(params) != len(grads) or len(params) != len(state.exp_avg):
        raise ValueError("params, grads and optimizer state are misaligned")
    b1, b2 = state.betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        p = np.asarray(p, dtype=np.float64)
        g = np.zeros_like(p) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != p.shape or state.exp_avg[i].shape != p.shape:
            raise ValueError(f"shape mismatch for parameter {i}: param {p.shape}, grad {g.shape}")
        m = state.exp_avg[i]
        v = state.exp_avg_sq[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        new = p * (1.0 - state.lr * state.weight_decay)
        new = new - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        out.append(new)
    return out


class AdamW:
    """Stateful wrapper that updates :class:`Tensor` parameters in place."""

    def __init__(self, params, lr=3e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=5e-4):
        self.params = list(params)
        self.state = AdamWState.init(self.params, lr=lr, betas=tuple(betas), eps=eps, weight_decay=weight_decay)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        new = adamw_step([p.data for p in self.params], [p.grad for p in self.params], self.state)
        for p, value in zip(self.params, new):
            p.data = value
