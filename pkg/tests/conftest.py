from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gdflow.tensor import Tensor

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FD_STEP = 1e-5
FD_RTOL = 1e-4


def numeric_grad(fn, arrays: list[np.ndarray], step: float = FD_STEP) -> list[np.ndarray]:
    """Central finite differences of scalar ``fn(*arrays)`` w.r.t. every array entry."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + step
            up = fn(*arrays)
            arr[i] = old - step
            down = fn(*arrays)
            arr[i] = old
            g[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max-norm relative error with a unit floor on the scale."""
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0)
    return float(np.max(np.abs(a - b)) / scale)


def check_grads(build, arrays: list[np.ndarray], rtol: float = FD_RTOL) -> float:
    """Compare reverse-mode and finite-difference gradients of ``build(*tensors) -> scalar Tensor``.

    Returns the worst relative error.
    """
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = build(*tensors)
    out.backward()
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def scalar(*arrs):
        return float(build(*[Tensor(a) for a in arrs]).data)

    numeric = numeric_grad(scalar, [a.copy() for a in arrays])
    worst = max(rel_error(a, n) for a, n in zip(analytic, numeric))
    assert worst < rtol, f"gradient mismatch: relative error {worst:.3g}"
    return worst


def check_param_grads(loss_fn, params: list[Tensor], rtol: float = FD_RTOL) -> float:
    """Finite-difference check of ``loss_fn() -> scalar Tensor`` w.r.t. existing parameter tensors."""
    for p in params:
        p.grad = None
    loss_fn().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = np.zeros_like(p.data)
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p.data[i]
            p.data[i] = old + FD_STEP
            up = float(loss_fn().data)
            p.data[i] = old - FD_STEP
            down = float(loss_fn().data)
            p.data[i] = old
            numeric[i] = (up - down) / (2 * FD_STEP)
        worst = max(worst, rel_error(analytic, numeric))
    assert worst < rtol, f"gradient mismatch: relative error {worst:.3g}"
    return worst


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
