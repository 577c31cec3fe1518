"""Masked affine autoregressive flow over per-sensor embeddings."""

from __future__ import annotations

import logging
import math

import numpy as np

from .nn import Module, uniform_init
from .tensor import Tensor, as_tensor, matmul, no_grad

log = logging.getLogger(__name__)

LOG_SCALE_LIMIT = 7.0
LOG_2PI = math.log(2.0 * math.pi)


def made_masks(dim: int, hidden: int) -> tuple[np.ndarray, np.ndarray]:
    """Input->hidden and hidden->output masks giving output i dependence on inputs < i only."""
    in_deg = np.arange(1, dim + 1)
    hid_deg = np.arange(hidden) % max(dim - 1, 1) + 1
    out_deg = np.arange(1, dim + 1)
    mask_in = (in_deg[:, None] <= hid_deg[None, :]).astype(np.float64)
    mask_out = (hid_deg[:, None] < out_deg[None, :]).astype(np.float64)
    return mask_in, mask_out


class MaskedAffineBlock(Module):
    """``z = x * exp(s(x)) + c(x)`` with autoregressive ``s, c``, then reverse the dimensions."""

    def __init__(self, rng: np.random.Generator, dim: int, hidden: int):
        self.dim = dim
        self.mask_in, self.mask_out = (Tensor(m) for m in made_masks(dim, hidden))
        self.w_in = uniform_init(rng, dim, (dim, hidden))
        self.b_in = uniform_init(rng, dim, (hidden,))
        self.w_shift = uniform_init(rng, hidden, (hidden, dim))
        self.b_shift = uniform_init(rng, hidden, (dim,))
        self.w_scale = uniform_init(rng, hidden, (hidden, dim))
        self.b_scale = uniform_init(rng, hidden, (dim,))
        self.clamp_hits = 0

    def shift_and_log_scale(self, x: Tensor) -> tuple[Tensor, Tensor]:
        hid = (matmul(x, self.w_in * self.mask_in) + self.b_in).tanh()
        shift = matmul(hid, self.w_shift * self.mask_out) + self.b_shift
        raw = matmul(hid, self.w_scale * self.mask_out) + self.b_scale
        hits = int(np.count_nonzero(np.abs(raw.data) > LOG_SCALE_LIMIT))
        if hits:
            self.clamp_hits += hits
            log.debug("log-scale clamp active on %d entries", hits)
        return shift, raw.clip(-LOG_SCALE_LIMIT, LOG_SCALE_LIMIT)

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor]:
        shift, s = self.shift_and_log_scale(x)
        z = x * s.exp() + shift
        return z[..., ::-1], s.sum(axis=-1)

    def inverse(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)[..., ::-1]
        x = np.zeros_like(z)
        with no_grad():
            for i in range(self.dim):
                shift, s = self.shift_and_log_scale(Tensor(x))
                x[..., i] = (z[..., i] - shift.data[..., i]) * np.exp(-s.data[..., i])
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite value while inverting flow block")
        return x


class Flow(Module):
    """Stack of masked affine blocks with a diagonal Gaussian base."""

    def __init__(self, rng: np.random.Generator, dim: int, n_blocks: int = 1, hidden: int | None = None):
        self.dim = dim
        self.blocks = [MaskedAffineBlock(rng, dim, hidden or dim) for _ in range(n_blocks)]
        self.base_mean = np.zeros(dim)
        self.base_var = np.ones(dim)

    @property
    def clamp_hits(self) -> int:
        return sum(b.clamp_hits for b in self.blocks)


def flow_forward(S, flow: Flow) -> tuple[Tensor, Tensor]:
    """Push ``S`` (..., h) through every block; returns ``z`` and the summed log-determinant (...)."""
    z = as_tensor(S)
    if z.shape[-1] != flow.dim:
        raise ValueError(f"flow expects last axis {flow.dim}, got {z.shape}")
    logdet = None
    for block in flow.blocks:
        z, ld = block.forward(z)
        logdet = ld if logdet is None else logdet + ld
    if logdet is None:
        logdet = Tensor(np.zeros(z.shape[:-1]))
    return z, logdet


def flow_inverse(z, flow: Flow) -> np.ndarray:
    x = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
    for block in reversed(flow.blocks):
        x = block.inverse(x)
    return x


def base_logprob(z, mean=None, var=None) -> Tensor:
    """Diagonal Gaussian log-density summed over the last axis."""
    z = as_tensor(z)
    h = z.shape[-1]
    mean = np.zeros(h) if mean is None else np.asarray(mean, dtype=np.float64)
    var = np.ones(h) if var is None else np.asarray(var, dtype=np.float64)
    if np.any(var <= 0):
        raise ValueError("base variances must be positive")
    sq = ((z - mean) ** 2) * (1.0 / var)
    return (sq + (np.log(var) + LOG_2PI)).sum(axis=-1) * -0.5


def log_likelihood(S, flow: Flow) -> Tensor:
    """Log-density of every embedding vector, shape ``S.shape[:-1]``."""
    z, logdet = flow_forward(S, flow)
    return base_logprob(z, flow.base_mean, flow.base_var) + logdet
