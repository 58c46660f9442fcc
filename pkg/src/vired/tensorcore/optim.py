from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import DTYPE, Tensor


@dataclass
class AdamWState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-3
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(params: dict[str, Tensor], state: AdamWState, lr: float, grads: dict[str, np.ndarray] | None = None) -> None:
    """One AdamW update with decoupled weight decay and bias-corrected moments.

    ``grads`` defaults to each parameter's ``.grad``. Parameters without a
    gradient (not reached by backward) are left untouched, decay included.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = p.grad if grads is None else grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"{name}: grad shape {g.shape} != param shape {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        if m.shape != p.shape:
            raise ValueError(f"{name}: optimizer state shape {m.shape} != param shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps) + state.weight_decay * p.data
        p.data = (p.data - lr * update).astype(DTYPE)


class AdamW:
    """Thin stateful wrapper binding a parameter dict to an :class:`AdamWState`."""

    def __init__(self, params: dict[str, Tensor], betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 1e-3):
        self.params = params
        self.state = AdamWState(beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)

    def step(self, lr: float) -> None:
        adamw_step(self.params, self.state, lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup from 0 to ``base_lr``, then linear decay to ``final_lr``."""

    total_steps: int
    base_lr: float = 1e-4
    final_lr: float = 1e-5
    warmup_fraction: float = 0.2

    def __post_init__(self):
        if self.total_steps <= 0:
            raise ValueError("total_steps must be positive")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValueError("warmup_fraction must lie in [0, 1]")

    @property
    def warmup_end(self) -> float:
        return self.warmup_fraction * self.total_steps

    def __call__(self, step: int) -> float:
        return lr_at(self, step)


def lr_at(schedule: LrSchedule, step: int) -> float:
    if not 0 <= step <= schedule.total_steps:
        raise ValueError(f"step {step} outside [0, {schedule.total_steps}]")
    w = schedule.warmup_end
    if step <= w and w > 0:
        return schedule.base_lr * step / w
    span = schedule.total_steps - w
    if span <= 0:
        return schedule.base_lr
    frac = (step - w) / span
    return schedule.base_lr + (schedule.final_lr - schedule.base_lr) * frac
