"""Adam and gradient-norm clipping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch, ValidationError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValidationError("Adam betas must lie in [0, 1)")
        if self.eps <= 0 or self.lr <= 0:
            raise ValidationError("Adam lr and eps must be > 0")


def adam_step(state: AdamState, params: list, grads: list) -> list:
    """Bias-corrected Adam update; returns new parameter arrays and advances ``state``."""
    if len(params) != len(grads):
        raise ShapeMismatch(f"{len(params)} params vs {len(grads)} grads")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape or p.shape != state.m[i].shape:
            raise ShapeMismatch(f"param {i}: {p.shape} vs grad {g.shape}")
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        out.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return out


class Adam:
    """Stateful wrapper updating Tensor parameters from their ``.grad``."""

    def __init__(self, params: list, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new = adam_step(self.state, [p.data for p in self.params], grads)
        for p, d in zip(self.params, new):
            p.data = d


def clip_grad_norm(params: list, max_norm: float) -> float:
    """Rescale grads in place so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm. ``max_norm == 0`` zeroes every gradient.
    """
    grads = [p.grad for p in params if p.grad is not None]
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12) if max_norm > 0 else 0.0
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total
