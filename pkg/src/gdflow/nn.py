"""Small building blocks shared by the encoder and the flow."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .tensor import Tensor


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.PCG64(int(seed)))


def uniform_init(rng: np.random.Generator, fan_in: int, shape, scale: float = 1.0) -> Tensor:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return Tensor(scale * rng.uniform(-bound, bound, size=shape), requires_grad=True)


class Module:
    """Parameter container; attributes holding trainable tensors or modules are discovered by name."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{full}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        unexpected = set(state) - set(own)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data = value.copy()


class Dense(Module):
    """``x @ weight + bias`` over the last axis."""

    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, scale: float = 1.0):
        self.weight = uniform_init(rng, n_in, (n_in, n_out), scale)
        self.bias = uniform_init(rng, n_in, (n_out,), scale)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias
