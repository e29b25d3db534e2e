"""Per-algorithm hyperparameters.

Defaults are the published experiment settings. Fields marked ``recorded``
are kept verbatim for provenance but do not influence training.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from ..errors import ValidationError


def _check_common(cfg) -> None:
    gamma = getattr(cfg, "gamma", None)
    if gamma is not None and not 0.0 < gamma <= 1.0:
        raise ValidationError(f"{type(cfg).__name__}: gamma must lie in (0, 1]")
    for f in fields(cfg):
        if f.name.endswith("lr") and not getattr(cfg, f.name) > 0:
            raise ValidationError(f"{type(cfg).__name__}: {f.name} must be > 0")
    tau = getattr(cfg, "tau", None)
    if tau is not None and not 0.0 < tau <= 1.0:
        raise ValidationError(f"{type(cfg).__name__}: tau must lie in (0, 1]")
    for name in ("hidden", "batch_size", "buffer_size"):
        v = getattr(cfg, name, None)
        if v is not None and v < 1:
            raise ValidationError(f"{type(cfg).__name__}: {name} must be >= 1")


class _Base:
    def __post_init__(self):
        _check_common(self)

    def replace(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class NafConfig(_Base):
    hidden: int = 256
    batch_size: int = 128
    buffer_size: int = 10_000
    lr: float = 1e-3
    tau: float = 1e-3
    gamma: float = 0.99
    update_every: int = 2
    updates_per_step: int = 1  # number_of_updates
    warmup_steps: int = 100
    ou_theta: float = 0.15
    ou_sigma: float = 0.2


@dataclass(frozen=True)
class ReinforceConfig(_Base):
    gamma: float = 0.99
    hidden: int = 128
    lr: float = 1e-3
    episodes_per_update: int = 1


@dataclass(frozen=True)
class DdpgConfig(_Base):
    hidden: int = 256
    buffer_size: int = 10_000
    memory_fill_episodes: int = 10  # recorded
    gamma: float = 0.99
    tau: float = 0.005
    ou_sigma: float = 0.2
    ou_theta: float = 0.15
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    warmup_steps: int = 100
    update_every: int = 1
    updates_per_step: int = 1


@dataclass(frozen=True)
class Td3Config(_Base):
    hidden: int = 256
    buffer_size: int = 100_000
    max_action: float = 1.0
    gamma: float = 0.99
    update_freq: int = 2
    tau: float = 0.005
    policy_noise_std: float = 0.2
    policy_noise_clip: float = 0.5
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    batch_size: int = 128
    exploration_noise: float = 0.1
    num_layers: int = 3
    dropout: float = 0.2  # recorded
    add_lstm: bool = False  # recorded
    warmup_steps: int = 100
    update_every: int = 1
    updates_per_step: int = 1

    def __post_init__(self):
        super().__post_init__()
        if self.add_lstm:
            raise ValidationError("recurrent TD3 is not supported")
        if self.num_layers < 2:
            raise ValidationError("num_layers must be >= 2")


@dataclass(frozen=True)
class A2cConfig(_Base):
    hidden: int = 256
    entropy_beta: float = 0.0
    gamma: float = 0.9
    actor_lr: float = 4e-4
    critic_lr: float = 4e-3
    max_grad_norm: float = 0.5
    n_steps: int = 16
    actor_weight: str = "q_value"  # or "td_error"

    def __post_init__(self):
        super().__post_init__()
        if self.actor_weight not in ("q_value", "td_error"):
            raise ValidationError("actor_weight must be 'q_value' or 'td_error'")


@dataclass(frozen=True)
class SacConfig(_Base):
    hidden: int = 256
    value_lr: float = 3e-4  # recorded
    soft_q_lr: float = 3e-4
    policy_lr: float = 3e-4
    gamma: float = 0.99
    mean_lambda: float = 1e-3
    std_lambda: float = 1e-3
    z_lambda: float = 0.0  # recorded
    soft_tau: float = 1e-2
    buffer_size: int = 1_000_000
    batch_size: int = 128
    alpha: float = 0.2
    warmup_steps: int = 100
    update_every: int = 1
    updates_per_step: int = 1


@dataclass(frozen=True)
class TrpoConfig(_Base):
    hidden: int = 256
    damping: float = 0.1
    episode_length: int = 2000  # steps collected per policy update
    fisher_ratio: float = 1.0  # recorded
    gamma: float = 0.995
    l2_reg: float = 1e-3
    lam: float = 0.97
    lr: float = 1e-3  # value-function step size
    max_iteration_number: int = 200  # recorded
    max_kl: float = 0.01
    val_opt_iter: int = 200
    value_memory: int = 1  # recorded
    cg_iters: int = 10
    backtrack_coef: float = 0.5
    backtrack_steps: int = 10


@dataclass(frozen=True)
class PpoConfig(_Base):
    hidden: int = 256
    timesteps_per_batch: int = 50_000
    max_timesteps_per_episode: int = 2_000  # recorded
    n_updates_per_iteration: int = 5
    lr: float = 0.005
    gamma: float = 0.95
    clip: float = 0.2
    lam: float = 1.0
    minibatches: int = 1
    normalize_advantages: bool = True

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.clip < 1.0:
            raise ValidationError("clip must lie in (0, 1)")


CONFIGS = {
    "naf": NafConfig,
    "reinforce": ReinforceConfig,
    "ddpg": DdpgConfig,
    "td3": Td3Config,
    "a2c": A2cConfig,
    "sac": SacConfig,
    "trpo": TrpoConfig,
    "ppo": PpoConfig,
}


def make_config(algorithm: str, overrides: dict | None = None):
    try:
        cls = CONFIGS[algorithm]
    except KeyError:
        raise ValidationError(f"unknown algorithm {algorithm!r}; choose from {sorted(CONFIGS)}") from None
    overrides = dict(overrides or {})
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise ValidationError(f"{algorithm}: unknown hyperparameter(s) {sorted(unknown)}")
    return cls(**overrides)
