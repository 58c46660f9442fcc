"""Central finite-difference gradient checking.

The op under test runs in float32. Both sides build the full Jacobian of the
op's output with respect to each input: autodiff with one one-hot seed per
output element, finite differences with float64 difference quotients taken
over the perturbation actually applied in float32.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def numerical_jacobian(fn: Callable[[], Tensor], wrt: Tensor, h: float = 1e-3) -> np.ndarray:
    """[out.size, wrt.size] central-difference Jacobian of ``fn()`` with respect to ``wrt``."""
    flat = wrt.data.reshape(-1)
    cols = []
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up_x = np.float64(flat[i])
            up = fn().data.astype(np.float64).reshape(-1)
            flat[i] = orig - h
            down_x = np.float64(flat[i])
            down = fn().data.astype(np.float64).reshape(-1)
            flat[i] = orig
            cols.append((up - down) / (up_x - down_x))
    return np.stack(cols, axis=1)


def numerical_grad(fn: Callable[[], Tensor], wrt: Tensor, h: float = 1e-3) -> np.ndarray:
    """Central-difference gradient of the sum of ``fn()``'s outputs."""
    return numerical_jacobian(fn, wrt, h).sum(axis=0).reshape(wrt.shape)


def analytic_jacobian(fn: Callable[[], Tensor], inputs: Sequence[Tensor]) -> list[np.ndarray]:
    out = fn()
    jac = [np.zeros((out.size, t.size)) for t in inputs]
    for j in range(out.size):
        for t in inputs:
            t.grad = None
        seed = np.zeros(out.size, dtype=np.float32)
        seed[j] = 1.0
        out = fn()
        out.backward(seed.reshape(out.shape))
        for rows, t in zip(jac, inputs):
            if t.grad is not None:
                rows[j] = t.grad.reshape(-1)
    return jac


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(max|a|, max|n|)``; 0 when both are identically zero."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(a - n).max() / scale)


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-3) -> float:
    """Max relative error between the autodiff and finite-difference Jacobians.

    All inputs are judged together against the op's overall Jacobian scale, so
    an input whose true derivative is exactly zero (a key bias under softmax
    shift invariance, say) is not compared against its own rounding noise.
    """
    analytic = analytic_jacobian(fn, inputs)
    numeric = [numerical_jacobian(fn, t, h) for t in inputs]
    flat = lambda arrs: np.concatenate([a.reshape(-1) for a in arrs])  # noqa: E731
    return max_relative_error(flat(analytic), flat(numeric))
