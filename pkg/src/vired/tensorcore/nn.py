"""Parameter containers and layer building blocks."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .attention import AttentionWeights, ConfigError, mha
from .tensor import DTYPE, Tensor


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std by resampling."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out.astype(DTYPE)


def param(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=DTYPE), requires_grad=True)


class Module:
    """Attribute-registered tree of parameters and submodules.

    Parameter names are dotted attribute paths (``blocks.0.attn.wq``), which are
    also the checkpoint tensor names.
    """

    training: bool = False

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor):
                if val.requires_grad:
                    yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def modules(self) -> Iterator["Module"]:
        yield self
        for val in vars(self).values():
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, (list, tuple)):
                for item in val:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.parameters()
        if strict:
            missing = sorted(set(params) - set(state))
            if missing:
                raise KeyError(f"missing tensors: {missing[:5]}")
        for name, p in params.items():
            if name not in state:
                continue
            arr = np.asarray(state[name], dtype=DTYPE)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {arr.shape}")
            p.data = arr.copy()


def fan_in_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform(-a, a) with a = sqrt(1 / fan_in)."""
    a = np.sqrt(1.0 / fan_in)
    return rng.uniform(-a, a, size=shape).astype(DTYPE)


class Linear(Module):
    """Weight stored [in, out]. ``init`` is ``"trunc_normal"`` (std 0.02, zero
    bias) or ``"uniform"`` (fan-in uniform for weight and bias)."""

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, init: str = "trunc_normal"):
        if init == "trunc_normal":
            self.weight = param(trunc_normal(rng, (d_in, d_out)))
            self.bias = param(np.zeros(d_out))
        elif init == "uniform":
            self.weight = param(fan_in_uniform(rng, (d_in, d_out), d_in))
            self.bias = param(fan_in_uniform(rng, (d_out,), d_in))
        else:
            raise ValueError(f"unknown init {init!r}")

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = param(np.ones(dim))
        self.beta = param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class MultiHeadAttention(Module):
    def __init__(self, dim: int, n_heads: int, rng: np.random.Generator):
        if dim % n_heads:
            raise ConfigError(f"dim {dim} not divisible by n_heads {n_heads}")
        self.n_heads = n_heads
        for name in ("q", "k", "v", "o"):
            setattr(self, f"w{name}", param(trunc_normal(rng, (dim, dim))))
            setattr(self, f"b{name}", param(np.zeros(dim)))

    def weights(self) -> AttentionWeights:
        return AttentionWeights(self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor, key_mask=None) -> Tensor:
        return mha(query, key, value, self.weights(), self.n_heads, key_mask=key_mask)


class MLP(Module):
    """Linear -> ReLU -> ... -> Linear; no activation after the last layer."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, init: str = "uniform"):
        self.layers = [Linear(a, b, rng, init) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ops.relu(x)
        return x
