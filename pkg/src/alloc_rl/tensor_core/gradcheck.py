"""Central finite-difference checks against reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .layers import flat_grad, flat_params, set_flat_params


def analytic_grad(loss_fn, params: list) -> np.ndarray:
    for p in params:
        p.grad = None
    loss_fn().backward()
    g = flat_grad(params)
    for p in params:
        p.grad = None
    return g


def numeric_grad(loss_fn, params: list, h: float = 1e-6) -> np.ndarray:
    """Coordinate-wise central differences; cost is two loss calls per scalar."""
    theta = flat_params(params)
    out = np.empty_like(theta)
    for i in range(theta.size):
        bumped = theta.copy()
        bumped[i] += h
        set_flat_params(params, bumped)
        up = loss_fn().item()
        bumped[i] -= 2 * h
        set_flat_params(params, bumped)
        out[i] = (up - loss_fn().item()) / (2 * h)
    set_flat_params(params, theta)
    return out


def directional_error(loss_fn, params: list, rng: np.random.Generator, h: float = 1e-6,
                      directions: int = 2) -> float:
    """Worst relative error of g.d against the central difference along d.

    The first direction is the normalised gradient itself; the rest are random
    unit vectors, compared on the gradient's scale so a near-orthogonal draw
    cannot blow up the ratio.
    """
    theta = flat_params(params)
    g = analytic_grad(loss_fn, params)
    gnorm = float(np.linalg.norm(g))
    worst = 0.0
    for k in range(directions):
        if k == 0 and gnorm > 0:
            d = g / gnorm
        else:
            d = rng.standard_normal(theta.size)
            d /= np.linalg.norm(d)
        set_flat_params(params, theta + h * d)
        up = loss_fn().item()
        set_flat_params(params, theta - h * d)
        down = loss_fn().item()
        set_flat_params(params, theta)
        num = (up - down) / (2 * h)
        ana = float(g @ d)
        scale = max(abs(ana), abs(num), gnorm if k else 0.0, 1e-10)
        worst = max(worst, abs(ana - num) / scale)
    return worst


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-10))
