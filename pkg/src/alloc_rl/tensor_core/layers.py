"""Dense layers, MLPs, and the Gaussian policy head."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch, ValidationError
from .autograd import Tensor, concat, linear, no_grad, softmax

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    activation: str = "relu"
    output_head: str = "linear"  # linear | gaussian | softmax

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(s) for s in self.layer_sizes))
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValidationError(f"bad layer sizes {self.layer_sizes}")
        if self.activation not in ("relu", "tanh"):
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.output_head not in ("linear", "gaussian", "softmax"):
            raise ValidationError(f"unknown output head {self.output_head!r}")
        if self.output_head == "gaussian" and self.layer_sizes[-1] % 2:
            raise ValidationError("gaussian head needs an even output size (mean, log_std)")


class Linear:
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(fan_in)
        self.W = Tensor(rng.uniform(-bound, bound, (fan_in, fan_out)), requires_grad=True)
        self.b = Tensor(rng.uniform(-bound, bound, (fan_out,)), requires_grad=True)

    def __call__(self, x: Tensor, activation: str | None = None) -> Tensor:
        return linear(x, self.W, self.b, activation)


class Mlp:
    """Feed-forward net; hidden layers use ``spec.activation``, the last is affine.

    With a ``gaussian`` head the output is ``(mean, log_std)``, log_std clamped
    to [LOG_STD_MIN, LOG_STD_MAX]. With ``softmax`` the output is a simplex point.
    """

    def __init__(self, spec: MlpSpec, rng: np.random.Generator):
        self.spec = spec
        sizes = spec.layer_sizes
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]

    @property
    def in_size(self) -> int:
        return self.spec.layer_sizes[0]

    def trunk(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.shape[-1] != self.in_size:
            raise ShapeMismatch(f"input width {x.shape[-1]} != {self.in_size}")
        h = x
        for layer in self.layers[:-1]:
            h = layer(h, self.spec.activation)
        return self.layers[-1](h)

    def __call__(self, x):
        out = self.trunk(x)
        head = self.spec.output_head
        if head == "gaussian":
            d = out.shape[-1] // 2
            return out[..., :d], out[..., d:].clip(LOG_STD_MIN, LOG_STD_MAX)
        if head == "softmax":
            return softmax(out, axis=-1)
        return out

    forward = __call__

    def jvp(self, x: np.ndarray, tangents: list) -> tuple:
        """Forward-mode product of the trunk output with a parameter direction.

        ``tangents`` mirrors :meth:`parameters`. Returns (output, d output).
        """
        h = np.asarray(x, dtype=np.float64)
        dh = np.zeros_like(h)
        it = iter(tangents)
        last = len(self.layers) - 1
        for i, layer in enumerate(self.layers):
            dW, db = next(it), next(it)
            z = h @ layer.W.data + layer.b.data
            dz = dh @ layer.W.data + h @ dW + db
            if i == last:
                return z, dz
            if self.spec.activation == "relu":
                mask = z > 0
                h, dh = z * mask, dz * mask
            else:
                h = np.tanh(z)
                dh = dz * (1.0 - h * h)
        raise AssertionError("unreachable")

    def parameters(self) -> list:
        out = []
        for layer in self.layers:
            out.extend((layer.W, layer.b))
        return out

    def named_parameters(self) -> dict:
        named = {}
        for i, layer in enumerate(self.layers):
            named[f"layers.{i}.W"] = layer.W
            named[f"layers.{i}.b"] = layer.b
        return named

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def clone(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.spec = self.spec
        twin.layers = []
        for layer in self.layers:
            copy = Linear.__new__(Linear)
            copy.W = Tensor(layer.W.data.copy(), requires_grad=True)
            copy.b = Tensor(layer.b.data.copy(), requires_grad=True)
            twin.layers.append(copy)
        return twin


def q_input(state, action) -> Tensor:
    """Critic input: flattened state concatenated with the action."""
    return concat([state, action], axis=-1)


# ---------------------------------------------------------------- Gaussian head


def gaussian_log_prob(x, mean: Tensor, log_std: Tensor) -> Tensor:
    """Sum over the last axis of diagonal-Gaussian log densities."""
    x = x if isinstance(x, Tensor) else Tensor(x)
    z = (x - mean) * (-log_std).exp()
    return (z * z * -0.5 - log_std - _HALF_LOG_2PI).sum(axis=-1)


def gaussian_entropy(log_std: Tensor) -> Tensor:
    return (log_std + _HALF_LOG_2PIE).sum(axis=-1)


def gaussian_head(mean, log_std, rng: np.random.Generator):
    """Reparametrised draw: (sample, log_prob, entropy).

    ``sample = mean + exp(log_std) * z`` stays differentiable in mean and
    log_std; log_std is clamped to [LOG_STD_MIN, LOG_STD_MAX] first.
    """
    mean = mean if isinstance(mean, Tensor) else Tensor(mean)
    log_std = log_std if isinstance(log_std, Tensor) else Tensor(log_std)
    log_std = log_std.clip(LOG_STD_MIN, LOG_STD_MAX)
    z = rng.standard_normal(mean.shape)
    sample = mean + log_std.exp() * z
    return sample, gaussian_log_prob(sample, mean, log_std), gaussian_entropy(log_std)


def gaussian_kl(mean_p, log_std_p, mean_q, log_std_q) -> Tensor:
    """KL(p || q) for diagonal Gaussians, summed over the last axis."""
    var_p = (log_std_p * 2.0).exp()
    var_q = (log_std_q * 2.0).exp()
    diff = mean_p - mean_q
    return (log_std_q - log_std_p + (var_p + diff * diff) / (var_q * 2.0) - 0.5).sum(axis=-1)


# ---------------------------------------------------------------- parameter utilities


def soft_update(target: list, source: list, tau: float) -> None:
    """Polyak average in place: target <- tau * source + (1 - tau) * target."""
    if len(target) != len(source):
        raise ShapeMismatch(f"{len(target)} target params vs {len(source)} source params")
    if not 0.0 <= tau <= 1.0:
        raise ValidationError(f"tau must lie in [0, 1], got {tau}")
    for t, s in zip(target, source):
        if t.shape != s.shape:
            raise ShapeMismatch(f"soft_update {t.shape} vs {s.shape}")
        t.data = tau * s.data + (1.0 - tau) * t.data


def hard_update(target: list, source: list) -> None:
    soft_update(target, source, 1.0)


def flat_params(params: list) -> np.ndarray:
    return np.concatenate([p.data.ravel() for p in params])


def set_flat_params(params: list, flat: np.ndarray) -> None:
    i = 0
    for p in params:
        n = p.data.size
        p.data = flat[i:i + n].reshape(p.data.shape).copy()
        i += n
    if i != flat.size:
        raise ShapeMismatch(f"flat vector of {flat.size} for {i} parameters")


def flat_grad(params: list) -> np.ndarray:
    return np.concatenate([
        (p.grad if p.grad is not None else np.zeros_like(p.data)).ravel() for p in params
    ])


def unflatten(params: list, flat: np.ndarray) -> list:
    out, i = [], 0
    for p in params:
        n = p.data.size
        out.append(flat[i:i + n].reshape(p.data.shape))
        i += n
    return out


__all__ = [
    "LOG_STD_MAX", "LOG_STD_MIN", "Linear", "Mlp", "MlpSpec", "flat_grad", "flat_params",
    "gaussian_entropy", "gaussian_head", "gaussian_kl", "gaussian_log_prob", "hard_update",
    "no_grad", "q_input", "set_flat_params", "soft_update", "unflatten",
]
