"""Replay, exploration noise, return estimators and the agent base classes."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from ..errors import BufferTooSmall, ShapeMismatch, ValidationError
from ..tensor_core import (
    Mlp,
    MlpSpec,
    Tensor,
    gaussian_entropy,
    gaussian_log_prob,
    load_into,
    no_grad,
    save_params,
)

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- replay


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, seed: int = 0):
        if capacity < 1:
            raise ValidationError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.rng = np.random.default_rng(seed)
        # grow storage lazily so a 1e6 capacity costs nothing until used
        self._alloc = min(self.capacity, 1024)
        self.s = np.zeros((self._alloc, state_dim))
        self.a = np.zeros((self._alloc, action_dim))
        self.r = np.zeros(self._alloc)
        self.s2 = np.zeros((self._alloc, state_dim))
        self.d = np.zeros(self._alloc)
        self.size = 0
        self.pos = 0

    def __len__(self) -> int:
        return self.size

    def _grow(self) -> None:
        new = min(self.capacity, self._alloc * 2)
        for name in ("s", "a", "r", "s2", "d"):
            old = getattr(self, name)
            arr = np.zeros((new,) + old.shape[1:])
            arr[: self._alloc] = old
            setattr(self, name, arr)
        self._alloc = new

    def push(self, t: Transition) -> None:
        self.add(t.state, t.action, t.reward, t.next_state, t.done)

    def add(self, s, a, r, s2, done) -> None:
        if self.pos >= self._alloc and self._alloc < self.capacity:
            self._grow()
        i = self.pos
        self.s[i] = np.ravel(s)
        self.a[i] = a
        self.r[i] = r
        self.s2[i] = np.ravel(s2)
        self.d[i] = float(done)
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _index(self, k: int) -> int:
        """Physical slot of the k-th oldest transition."""
        start = self.pos if self.size == self.capacity else 0
        return (start + k) % self.capacity

    def contents(self) -> list:
        idx = [self._index(k) for k in range(self.size)]
        return [Transition(self.s[i].copy(), self.a[i].copy(), float(self.r[i]), self.s2[i].copy(), bool(self.d[i]))
                for i in idx]

    def sample_indices(self, n: int) -> np.ndarray:
        if n > self.size:
            raise BufferTooSmall(f"need {n} transitions, buffer holds {self.size}")
        return self.rng.choice(self.size, size=n, replace=False)

    def sample(self, n: int) -> dict:
        idx = self.sample_indices(n)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx], "s2": self.s2[idx], "d": self.d[idx]}


def buffer_push(buf: ReplayBuffer, t: Transition) -> None:
    buf.push(t)


def buffer_sample(buf: ReplayBuffer, n: int) -> dict:
    return buf.sample(n)


# ---------------------------------------------------------------- exploration noise


@dataclass
class OuNoiseState:
    x: np.ndarray
    theta: float = 0.15
    sigma: float = 0.2
    mu: float = 0.0


def ou_step(state: OuNoiseState, rng: np.random.Generator) -> np.ndarray:
    """x <- x + theta * (mu - x) + sigma * z; returns the new x."""
    z = rng.standard_normal(np.shape(state.x)) if state.sigma else 0.0
    state.x = state.x + state.theta * (state.mu - state.x) + state.sigma * z
    return np.array(state.x, dtype=np.float64, copy=True)


class OuNoise:
    def __init__(self, size: int, theta: float, sigma: float, rng: np.random.Generator, mu: float = 0.0):
        self.size = size
        self.rng = rng
        self.state = OuNoiseState(np.full(size, mu), theta, sigma, mu)

    def reset(self) -> None:
        self.state.x = np.full(self.size, self.state.mu)

    def __call__(self) -> np.ndarray:
        return ou_step(self.state, self.rng)


# ---------------------------------------------------------------- return estimators


def rewards_to_go(rewards, gamma: float) -> np.ndarray:
    r = np.asarray(rewards, dtype=np.float64)
    if r.size == 0:
        raise ValidationError("rewards_to_go needs at least one reward")
    out = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def gae_advantages(rewards, values, gamma: float, lam: float, dones=None) -> np.ndarray:
    """Generalised advantage estimates.

    ``values`` has one more entry than ``rewards`` (the bootstrap value).
    ``dones[t]`` cuts both the bootstrap and the recursion after step t.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if v.size != r.size + 1:
        raise ShapeMismatch(f"{v.size} values for {r.size} rewards; need len(rewards) + 1")
    d = np.zeros_like(r) if dones is None else np.asarray(dones, dtype=np.float64)
    adv = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * v[t + 1] * live - v[t]
        acc = delta + gamma * lam * live * acc
        adv[t] = acc
    return adv


def td_target(r, q_next, gamma: float, done) -> np.ndarray:
    """r + gamma * (1 - done) * q_next; exactly r on terminal transitions."""
    r = np.asarray(r, dtype=np.float64)
    done = np.asarray(done, dtype=np.float64)
    return np.where(done > 0, r, r + gamma * (1.0 - done) * np.asarray(q_next, dtype=np.float64))


# ---------------------------------------------------------------- Gaussian policy


class GaussianPolicy:
    """Diagonal Gaussian over raw actions; MLP mean, state-independent log-std."""

    def __init__(self, obs_dim: int, action_dim: int, hidden: int, rng: np.random.Generator,
                 activation: str = "tanh", init_log_std: float = 0.0, layers: int = 2):
        sizes = (obs_dim, *([hidden] * layers), action_dim)
        self.net = Mlp(MlpSpec(sizes, activation), rng)
        self.log_std = Tensor(np.full(action_dim, float(init_log_std)), requires_grad=True)

    def parameters(self) -> list:
        return self.net.parameters() + [self.log_std]

    def named_parameters(self) -> dict:
        named = {f"net.{k}": v for k, v in self.net.named_parameters().items()}
        named["log_std"] = self.log_std
        return named

    def dist(self, obs):
        mean = self.net(obs)
        return mean, self.log_std.clip(-20.0, 2.0)

    def log_prob(self, obs, actions) -> Tensor:
        mean, log_std = self.dist(obs)
        return gaussian_log_prob(actions, mean, log_std)

    def entropy(self) -> Tensor:
        return gaussian_entropy(self.log_std.clip(-20.0, 2.0))

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> tuple:
        with no_grad():
            mean, log_std = self.dist(obs)
        a = mean.data + np.exp(log_std.data) * rng.standard_normal(mean.shape)
        return a, mean.data

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        with no_grad():
            return self.net(obs).data


def mlp(sizes, rng, activation: str = "relu", head: str = "linear") -> Mlp:
    return Mlp(MlpSpec(tuple(sizes), activation, head), rng)


# ---------------------------------------------------------------- agent base


def config_hash(cfg) -> str:
    blob = json.dumps(asdict(cfg), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class Agent:
    """Common surface: ``act``, ``train``, checkpointing and loss exposure."""

    name = "agent"
    outputs_weights = False

    def __init__(self, obs_dim: int, action_dim: int, cfg, seed: int = 0):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.cfg = cfg
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.steps = 0

    # -- subclass hooks
    def networks(self) -> dict:
        """name -> object with ``named_parameters()``."""
        raise NotImplementedError

    def act(self, obs, explore: bool = False) -> np.ndarray:
        raise NotImplementedError

    def train(self, env, timesteps: int, callback: Optional[Callable] = None) -> dict:
        raise NotImplementedError

    def surrogates(self, batch: dict) -> dict:
        """name -> (zero-arg callable returning a scalar loss Tensor, parameter list).

        Noise used by the losses is frozen at call time so the callables are
        deterministic functions of the parameters.
        """
        raise NotImplementedError

    def reset(self) -> None:
        pass

    # -- shared
    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = {}
        for net_name, net in self.networks().items():
            path = save_params(directory / f"{net_name}.npz", net.named_parameters())
            files[net_name] = path.name
        manifest = {
            "algorithm": self.name,
            "config": asdict(self.cfg),
            "config_hash": config_hash(self.cfg),
            "steps": self.steps,
            "obs_dim": self.obs_dim,
            "action_dim": self.action_dim,
            "networks": files,
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
        return directory

    def load(self, directory) -> None:
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest["algorithm"] != self.name:
            raise ValidationError(f"checkpoint is for {manifest['algorithm']}, not {self.name}")
        for net_name, net in self.networks().items():
            load_into(directory / manifest["networks"][net_name], net.named_parameters())
        self.steps = int(manifest["steps"])


class OffPolicyAgent(Agent):
    """Step-wise loop: act, store, and learn from uniformly replayed minibatches."""

    def __init__(self, obs_dim, action_dim, cfg, seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        self.buffer = ReplayBuffer(cfg.buffer_size, obs_dim, action_dim, seed=seed + 1)

    def explore_action(self, obs) -> np.ndarray:
        return self.act(obs, explore=True)

    def update(self, batch: dict) -> dict:
        raise NotImplementedError

    def on_episode_start(self) -> None:
        pass

    def train(self, env, timesteps, callback=None):
        cfg = self.cfg
        obs = env.reset()
        self.on_episode_start()
        stats = {}
        for t in range(int(timesteps)):
            flat = obs.reshape(-1)
            if self.steps < cfg.warmup_steps:
                a = self.rng.uniform(-1.0, 1.0, self.action_dim)
            else:
                a = self.explore_action(flat)
            res = env.step(a)
            nxt = res.observation.reshape(-1)
            self.buffer.add(flat, a, res.reward, nxt, res.done)
            self.steps += 1
            obs = res.observation
            if res.done:
                obs = env.reset()
                self.on_episode_start()
            if (self.steps >= cfg.warmup_steps and len(self.buffer) >= cfg.batch_size
                    and self.steps % cfg.update_every == 0):
                for _ in range(cfg.updates_per_step):
                    stats = self.update(self.buffer.sample(cfg.batch_size))
            if callback is not None:
                callback(self, t, res)
        return stats


class OnPolicyAgent(Agent):
    """Collects a fresh batch with the current policy, updates, then discards it."""

    whole_episodes = False

    def __init__(self, obs_dim, action_dim, cfg, seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        self.policy = None

    def act(self, obs, explore=False):
        obs = np.asarray(obs, dtype=np.float64).reshape(-1)
        if explore:
            a, _ = self.policy.sample(obs, self.rng)
            return a
        return self.policy.mean_action(obs)

    def batch_steps(self) -> int:
        raise NotImplementedError

    def update(self, rollout: dict) -> dict:
        raise NotImplementedError

    def collect(self, env, max_steps: int, obs=None) -> tuple:
        """Roll the stochastic policy for up to ``max_steps`` steps.

        Returns (rollout dict, next observation or None when an episode just ended).
        """
        states, actions, rewards, dones, next_states = [], [], [], [], []
        if obs is None:
            obs = env.reset()
        for _ in range(max_steps):
            flat = obs.reshape(-1)
            a = self.act(flat, explore=True)
            res = env.step(a)
            states.append(flat)
            actions.append(a)
            rewards.append(res.reward)
            dones.append(res.done)
            next_states.append(res.observation.reshape(-1))
            self.steps += 1
            obs = res.observation
            if res.done:
                obs = None
                if self.whole_episodes:
                    break
                obs = env.reset()
        rollout = {
            "s": np.array(states),
            "a": np.array(actions),
            "r": np.array(rewards),
            "d": np.array(dones, dtype=np.float64),
            "s2": np.array(next_states),
        }
        return rollout, obs

    def train(self, env, timesteps, callback=None):
        budget = int(timesteps)
        obs = None
        stats = {}
        while budget > 0:
            n = min(self.batch_steps(), budget)
            rollout, obs = self.collect(env, n, obs)
            budget -= len(rollout["r"])
            if len(rollout["r"]):
                stats = self.update(rollout)
            if callback is not None:
                callback(self, self.steps, stats)
        return stats


def check_batch(batch: dict, size: int) -> None:
    if batch is None or len(batch["r"]) < size:
        raise BufferTooSmall("batch smaller than the configured batch size")
