"""The eight model-free allocation agents."""

from ..errors import ValidationError
from .common import (
    Agent,
    GaussianPolicy,
    OffPolicyAgent,
    OnPolicyAgent,
    OuNoise,
    OuNoiseState,
    ReplayBuffer,
    Transition,
    buffer_push,
    buffer_sample,
    gae_advantages,
    ou_step,
    rewards_to_go,
    td_target,
)
from .config import CONFIGS, make_config
from .off_policy import (
    DdpgAgent,
    NafAgent,
    SacAgent,
    Td3Agent,
    clipped_double_q_target,
    ddpg_update,
    naf_advantage,
    naf_update,
    sac_target,
    sac_update,
    smoothing_noise,
    td3_update,
)
from .on_policy import (
    A2cAgent,
    PpoAgent,
    ReinforceAgent,
    TrpoAgent,
    a2c_td_error,
    a2c_update,
    conjugate_gradient,
    episode_returns,
    mean_kl,
    ppo_clip_objective,
    ppo_g,
    ppo_update,
    reinforce_update,
    trpo_update,
)

ALGORITHMS = {
    "naf": NafAgent,
    "reinforce": ReinforceAgent,
    "ddpg": DdpgAgent,
    "td3": Td3Agent,
    "a2c": A2cAgent,
    "sac": SacAgent,
    "trpo": TrpoAgent,
    "ppo": PpoAgent,
}


def make_agent(algorithm: str, obs_dim: int, action_dim: int, overrides: dict | None = None, seed: int = 0):
    key = algorithm.lower()
    if key not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {algorithm!r}; choose from {sorted(ALGORITHMS)}")
    return ALGORITHMS[key](obs_dim, action_dim, make_config(key, overrides), seed=seed)


def act(agent, obs, explore: bool = False):
    return agent.act(obs, explore)
