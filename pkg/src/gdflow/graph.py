"""Adaptive sensor graph: learned adjacency and its Chebyshev polynomial stack."""

from __future__ import annotations

import numpy as np

from .nn import Module, uniform_init
from .tensor import Tensor, as_tensor, concat, matmul


class NodeEmbeddings(Module):
    def __init__(self, rng: np.random.Generator, n_nodes: int, dim: int = 8):
        if n_nodes < 1:
            raise ValueError("need at least one node")
        self.E = uniform_init(rng, dim, (n_nodes, dim))

    @property
    def n_nodes(self) -> int:
        return self.E.shape[0]


def compute_adjacency(E) -> Tensor:
    """Row-stochastic ``softmax(relu(E E^T))``; softmax runs along each row."""
    E = as_tensor(E)
    if E.ndim != 2 or E.shape[0] < 1:
        raise ValueError(f"embeddings must be (n, d) with n >= 1, got {E.shape}")
    if not np.all(np.isfinite(E.data)):
        raise ValueError("non-finite node embeddings")
    return matmul(E, E.T).relu().softmax(axis=-1)


def chebyshev_stack(A, K: int) -> list[Tensor]:
    """``[C_0, ..., C_K]`` with C_0 = I, C_1 = A, C_k = 2 A C_{k-1} - C_{k-2}."""
    A = as_tensor(A)
    if K < 0:
        raise ValueError("K must be non-negative")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency must be square, got {A.shape}")
    stack = [Tensor(np.eye(A.shape[0]))]
    if K >= 1:
        stack.append(A)
    for _ in range(2, K + 1):
        stack.append(2.0 * matmul(A, stack[-1]) - stack[-2])
    return stack


def graph_conv(stack: list[Tensor], node_features, weights) -> Tensor:
    """``sum_k C_k X W_k`` for features ``(..., n, h)`` and weights ``(K+1, h, h')``."""
    X = as_tensor(node_features)
    W = as_tensor(weights)
    if W.ndim != 3 or W.shape[0] != len(stack):
        raise ValueError(f"weights must be ({len(stack)}, h, h'), got {W.shape}")
    n = stack[0].shape[0]
    if X.ndim < 2 or X.shape[-2] != n or X.shape[-1] != W.shape[1]:
        raise ValueError(f"features {X.shape} do not match {n} nodes and weights {W.shape}")
    k1, h, h_out = W.shape
    # one matmul against the stacked [C_0 X | C_1 X | ...] features
    mixed = concat([matmul(C, X) for C in stack], axis=-1)
    return matmul(mixed, W.reshape(k1 * h, h_out))
