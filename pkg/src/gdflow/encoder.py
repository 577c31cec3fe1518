"""Dual controlled-differential-equation encoder.

A temporal state ``H`` is driven by the spline path of each window, a spatial
state ``Y`` is driven by the increments of ``H`` through a graph-mixing vector
field, and the two are combined elementwise into the embedding ``S``. Both
equations are integrated with explicit Euler steps on the sample grid.
"""

from __future__ import annotations

import numpy as np

from . import spline
from .graph import NodeEmbeddings, chebyshev_stack, compute_adjacency, graph_conv
from .nn import Dense, Module, uniform_init
from .tensor import NonFiniteError, Tensor, as_tensor, bilinear, matmul

PATH_DIM = 2  # (sensor value, normalized time)


class NCDEEncoder(Module):
    def __init__(
        self,
        rng: np.random.Generator,
        n_sensors: int,
        hidden: int = 32,
        cheb_k: int = 2,
        embed_dim: int = 8,
        no_ncde: bool = False,
    ):
        h, d = hidden, PATH_DIM
        self.hidden = hidden
        self.cheb_k = cheb_k
        self.no_ncde = no_ncde
        self.W_H = uniform_init(rng, d, (d, h))
        if no_ncde:
            self._n_sensors = n_sensors
            self.rnn_in = Dense(rng, d, h)
            self.rnn_rec = uniform_init(rng, h, (h, h))
            return
        self.embeddings = NodeEmbeddings(rng, n_sensors, embed_dim)
        self.W_Y = uniform_init(rng, d, (d, h))
        # temporal field f1: h -> h -> h*d
        self.f1_hidden = Dense(rng, h, h)
        self.f1_out = Dense(rng, h, h * d, scale=0.1)
        # spatial field f2: Chebyshev graph conv h -> h, then h -> h*h
        self.f2_graph = uniform_init(rng, (cheb_k + 1) * h, (cheb_k + 1, h, h))
        self.f2_graph_bias = uniform_init(rng, (cheb_k + 1) * h, (h,))
        self.f2_out = uniform_init(rng, h, (h, h, h), scale=0.1)
        self.f2_out_bias = uniform_init(rng, h, (h, h), scale=0.1)

    @property
    def n_sensors(self) -> int:
        return self._n_sensors if self.no_ncde else self.embeddings.n_nodes

    # -- pieces --------------------------------------------------------------

    def init_state(self, X0) -> tuple[Tensor, Tensor]:
        X0 = as_tensor(X0)
        if X0.shape[-1] != self.W_H.shape[0]:
            raise ValueError(f"initial path value has {X0.shape[-1]} channels, expected {self.W_H.shape[0]}")
        return matmul(X0, self.W_H), matmul(X0, self.W_Y)

    def vector_field_f1(self, H) -> Tensor:
        """Per-sensor matrix field of shape ``(..., h, d)``."""
        H = as_tensor(H)
        out = self.f1_out(self.f1_hidden(H).tanh())
        return out.reshape(H.shape[:-1] + (self.hidden, PATH_DIM))

    def _f2_features(self, Y: Tensor, stack: list[Tensor]) -> Tensor:
        return (graph_conv(stack, Y, self.f2_graph) + self.f2_graph_bias).tanh()

    def vector_field_f2(self, Y, stack: list[Tensor]) -> Tensor:
        """Per-sensor matrix field of shape ``(..., h, h)``."""
        Y = as_tensor(Y)
        h = self.hidden
        u = self._f2_features(Y, stack)
        out = matmul(u, self.f2_out.reshape(h, h * h)).reshape(Y.shape[:-1] + (h, h))
        return out + self.f2_out_bias

    def _apply_f2(self, Y: Tensor, dH: Tensor, stack: list[Tensor]) -> Tensor:
        # vector_field_f2(Y) @ dH without materializing the h x h matrices
        u = self._f2_features(Y, stack)
        return bilinear(u, self.f2_out, dH) + matmul(dH, self.f2_out_bias.T)

    def graph_stack(self) -> list[Tensor]:
        return chebyshev_stack(compute_adjacency(self.embeddings.E), self.cheb_k)

    # -- integration ---------------------------------------------------------

    def encode(self, window, substeps: int = 1) -> Tensor:
        """Map windows ``(b, n, w)`` to embeddings ``S(T)`` of shape ``(b, n, h)``.

        ``substeps`` splits every unit sample interval into that many Euler steps.
        """
        x = np.asarray(window.data if isinstance(window, Tensor) else window, dtype=np.float64)
        if x.ndim != 3:
            raise ValueError(f"window batch must be (b, n, w), got {x.shape}")
        b, n, w = x.shape
        if n != self.n_sensors:
            raise ValueError(f"window has {n} sensors, encoder expects {self.n_sensors}")
        if w < 2:
            raise ValueError("window length must be at least 2")
        if self.no_ncde:
            return self._encode_rnn(x)

        path = spline.fit(x)
        dt = 1.0 / substeps
        n_steps = (w - 1) * substeps
        if substeps == 1:
            slopes = path.knot_derivatives()
        else:
            slopes = spline.eval_derivative(path, np.arange(n_steps) * dt)
        dX_all = np.empty((n_steps, b, n, PATH_DIM))
        dX_all[..., 0] = np.moveaxis(slopes, -1, 0) * dt
        dX_all[..., 1] = dt / (w - 1)

        X0 = np.stack([x[..., 0], np.zeros((b, n))], axis=-1)
        H, Y = self.init_state(X0)
        stack = self.graph_stack()
        for step in range(n_steps):
            try:
                dX = Tensor(dX_all[step][..., None])
                H_next = H + matmul(self.vector_field_f1(H), dX).reshape(b, n, self.hidden)
                dH = H_next - H
                Y = Y + self._apply_f2(Y, dH, stack)
                H = H_next
            except NonFiniteError as exc:
                raise NonFiniteError(f"encoder state became non-finite at Euler step {step}: {exc}") from exc
        return Y * H

    def _encode_rnn(self, x: np.ndarray) -> Tensor:
        b, n, w = x.shape
        time = np.broadcast_to(np.linspace(0.0, 1.0, w), (b, n, w))
        inputs = np.stack([x, time], axis=-1)
        H = matmul(Tensor(inputs[:, :, 0, :]), self.W_H)
        for k in range(1, w):
            H = (self.rnn_in(Tensor(inputs[:, :, k, :])) + matmul(H, self.rnn_rec)).tanh()
        return H
