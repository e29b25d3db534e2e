"""Replay-based agents: DDPG, TD3, SAC and NAF."""

from __future__ import annotations

import numpy as np

from ..tensor_core import (
    Adam,
    Mlp,
    MlpSpec,
    Tensor,
    concat,
    gaussian_log_prob,
    minimum,
    no_grad,
    soft_update,
)
from .common import OffPolicyAgent, OuNoise, check_batch, mlp, td_target
from .config import DdpgConfig, NafConfig, SacConfig, Td3Config

# ---------------------------------------------------------------- pure targets


def clipped_double_q_target(r, q1_next, q2_next, gamma: float, done) -> np.ndarray:
    return td_target(r, np.minimum(q1_next, q2_next), gamma, done)


def smoothing_noise(rng: np.random.Generator, shape, std: float, clip: float) -> np.ndarray:
    return np.clip(rng.normal(0.0, std, shape), -clip, clip)


def sac_target(r, q1_next, q2_next, logp_next, gamma: float, alpha: float, done) -> np.ndarray:
    soft_v = np.minimum(q1_next, q2_next) - alpha * np.asarray(logp_next)
    return td_target(r, soft_v, gamma, done)


def _critic_in(s, a) -> Tensor:
    return concat([Tensor(s) if not isinstance(s, Tensor) else s, a], axis=-1)


# ---------------------------------------------------------------- DDPG


class DdpgAgent(OffPolicyAgent):
    name = "DDPG"

    def __init__(self, obs_dim, action_dim, cfg: DdpgConfig = DdpgConfig(), seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        h = cfg.hidden
        self.actor = mlp((obs_dim, h, h, action_dim), self.rng)
        self.critic = mlp((obs_dim + action_dim, h, h, 1), self.rng)
        self.actor_target = self.actor.clone()
        self.critic_target = self.critic.clone()
        self.actor_opt = Adam(self.actor.parameters(), lr=cfg.actor_lr)
        self.critic_opt = Adam(self.critic.parameters(), lr=cfg.critic_lr)
        self.noise = OuNoise(action_dim, cfg.ou_theta, cfg.ou_sigma, self.rng)

    def networks(self):
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}

    def on_episode_start(self):
        self.noise.reset()

    def act(self, obs, explore=False):
        with no_grad():
            a = self.actor(np.asarray(obs, dtype=np.float64).reshape(-1)).data
        return a + self.noise() if explore else a

    def targets(self, batch) -> np.ndarray:
        with no_grad():
            a2 = self.actor_target(batch["s2"])
            q2 = self.critic_target(_critic_in(batch["s2"], a2)).data[:, 0]
        return td_target(batch["r"], q2, self.cfg.gamma, batch["d"])

    def critic_loss(self, batch, y) -> Tensor:
        q = self.critic(_critic_in(batch["s"], Tensor(batch["a"])))[:, 0]
        return ((q - y) ** 2).mean()

    def actor_loss(self, batch) -> Tensor:
        return -self.critic(_critic_in(batch["s"], self.actor(batch["s"]))).mean()

    def surrogates(self, batch):
        y = self.targets(batch)
        return {
            "critic": (lambda: self.critic_loss(batch, y), self.critic.parameters()),
            "actor": (lambda: self.actor_loss(batch), self.actor.parameters()),
        }

    def update(self, batch):
        check_batch(batch, 1)
        y = self.targets(batch)
        self.critic_opt.zero_grad()
        closs = self.critic_loss(batch, y)
        closs.backward()
        self.critic_opt.step()
        self.actor_opt.zero_grad()
        aloss = self.actor_loss(batch)
        aloss.backward()
        self.actor_opt.step()
        self.critic.zero_grad()
        soft_update(self.actor_target.parameters(), self.actor.parameters(), self.cfg.tau)
        soft_update(self.critic_target.parameters(), self.critic.parameters(), self.cfg.tau)
        return {"critic_loss": closs.item(), "actor_loss": aloss.item()}


def ddpg_update(agent: DdpgAgent, batch: dict) -> dict:
    return agent.update(batch)


# ---------------------------------------------------------------- TD3


class Td3Agent(OffPolicyAgent):
    name = "TD3"

    def __init__(self, obs_dim, action_dim, cfg: Td3Config = Td3Config(), seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        hidden = (cfg.hidden,) * (cfg.num_layers - 1)
        self.actor = mlp((obs_dim, *hidden, action_dim), self.rng)
        self.critic1 = mlp((obs_dim + action_dim, *hidden, 1), self.rng)
        self.critic2 = mlp((obs_dim + action_dim, *hidden, 1), self.rng)
        self.actor_target = self.actor.clone()
        self.critic1_target = self.critic1.clone()
        self.critic2_target = self.critic2.clone()
        self.actor_opt = Adam(self.actor.parameters(), lr=cfg.actor_lr)
        self.critic_opt = Adam(self.critic1.parameters() + self.critic2.parameters(), lr=cfg.critic_lr)
        self.n_updates = 0

    def networks(self):
        return {"actor": self.actor, "critic1": self.critic1, "critic2": self.critic2,
                "actor_target": self.actor_target, "critic1_target": self.critic1_target,
                "critic2_target": self.critic2_target}

    def policy(self, net: Mlp, s) -> Tensor:
        return net(s).tanh() * self.cfg.max_action

    def act(self, obs, explore=False):
        cfg = self.cfg
        with no_grad():
            a = self.policy(self.actor, np.asarray(obs, dtype=np.float64).reshape(-1)).data
        if explore:
            a = a + self.rng.normal(0.0, cfg.exploration_noise * cfg.max_action, a.shape)
            a = np.clip(a, -cfg.max_action, cfg.max_action)
        return a

    def target_parts(self, batch, noise=None):
        """(target y, Q1' and Q2' at the smoothed target action)."""
        cfg = self.cfg
        if noise is None:
            noise = smoothing_noise(self.rng, (len(batch["r"]), self.action_dim),
                                    cfg.policy_noise_std, cfg.policy_noise_clip)
        with no_grad():
            a2 = np.clip(self.policy(self.actor_target, batch["s2"]).data + noise,
                         -cfg.max_action, cfg.max_action)
            x2 = _critic_in(batch["s2"], Tensor(a2))
            q1 = self.critic1_target(x2).data[:, 0]
            q2 = self.critic2_target(x2).data[:, 0]
        return clipped_double_q_target(batch["r"], q1, q2, cfg.gamma, batch["d"]), q1, q2

    def critic_loss(self, batch, y) -> Tensor:
        x = _critic_in(batch["s"], Tensor(batch["a"]))
        return ((self.critic1(x)[:, 0] - y) ** 2).mean() + ((self.critic2(x)[:, 0] - y) ** 2).mean()

    def actor_loss(self, batch) -> Tensor:
        return -self.critic1(_critic_in(batch["s"], self.policy(self.actor, batch["s"]))).mean()

    def surrogates(self, batch):
        y, _, _ = self.target_parts(batch)
        return {
            "critics": (lambda: self.critic_loss(batch, y), self.critic1.parameters() + self.critic2.parameters()),
            "actor": (lambda: self.actor_loss(batch), self.actor.parameters()),
        }

    def update(self, batch, step: int | None = None):
        check_batch(batch, 1)
        self.n_updates += 1
        step = self.n_updates if step is None else step
        y, _, _ = self.target_parts(batch)
        self.critic_opt.zero_grad()
        closs = self.critic_loss(batch, y)
        closs.backward()
        self.critic_opt.step()
        stats = {"critic_loss": closs.item(), "actor_updated": False}
        if step % self.cfg.update_freq == 0:
            self.actor_opt.zero_grad()
            aloss = self.actor_loss(batch)
            aloss.backward()
            self.actor_opt.step()
            self.critic1.zero_grad()
            tau = self.cfg.tau
            soft_update(self.actor_target.parameters(), self.actor.parameters(), tau)
            soft_update(self.critic1_target.parameters(), self.critic1.parameters(), tau)
            soft_update(self.critic2_target.parameters(), self.critic2.parameters(), tau)
            stats.update(actor_loss=aloss.item(), actor_updated=True)
        return stats


def td3_update(agent: Td3Agent, batch: dict, step: int | None = None) -> dict:
    return agent.update(batch, step)


# ---------------------------------------------------------------- SAC


class SacAgent(OffPolicyAgent):
    """Twin-Q soft actor-critic with a fixed entropy coefficient.

    Actions are tanh-squashed Gaussian draws, so raw actions lie in (-1, 1)
    and log-probabilities carry the change-of-variables correction.
    """

    name = "SAC"
    SQUASH_EPS = 1e-6

    def __init__(self, obs_dim, action_dim, cfg: SacConfig = SacConfig(), seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        h = cfg.hidden
        self.policy = Mlp(MlpSpec((obs_dim, h, h, 2 * action_dim), "relu", "gaussian"), self.rng)
        self.q1 = mlp((obs_dim + action_dim, h, h, 1), self.rng)
        self.q2 = mlp((obs_dim + action_dim, h, h, 1), self.rng)
        self.q1_target = self.q1.clone()
        self.q2_target = self.q2.clone()
        self.policy_opt = Adam(self.policy.parameters(), lr=cfg.policy_lr)
        self.q_opt = Adam(self.q1.parameters() + self.q2.parameters(), lr=cfg.soft_q_lr)

    def networks(self):
        return {"policy": self.policy, "q1": self.q1, "q2": self.q2,
                "q1_target": self.q1_target, "q2_target": self.q2_target}

    def act(self, obs, explore=False):
        with no_grad():
            mean, log_std = self.policy(np.asarray(obs, dtype=np.float64).reshape(-1))
        if not explore:
            return np.tanh(mean.data)
        return np.tanh(mean.data + np.exp(log_std.data) * self.rng.standard_normal(mean.shape))

    def sample(self, states, z):
        """Reparametrised squashed draw: (action, log pi(action))."""
        mean, log_std = self.policy(states)
        u = mean + log_std.exp() * z
        a = u.tanh()
        logp = gaussian_log_prob(u, mean, log_std) - (1.0 - a * a + self.SQUASH_EPS).log().sum(axis=-1)
        return a, logp, mean, log_std

    def targets(self, batch, z_next=None) -> np.ndarray:
        cfg = self.cfg
        n = len(batch["r"])
        if z_next is None:
            z_next = self.rng.standard_normal((n, self.action_dim))
        with no_grad():
            a2, logp, _, _ = self.sample(batch["s2"], z_next)
            x2 = _critic_in(batch["s2"], a2)
            q1 = self.q1_target(x2).data[:, 0]
            q2 = self.q2_target(x2).data[:, 0]
        return sac_target(batch["r"], q1, q2, logp.data, cfg.gamma, cfg.alpha, batch["d"])

    def q_loss(self, batch, y) -> Tensor:
        x = _critic_in(batch["s"], Tensor(batch["a"]))
        return ((self.q1(x)[:, 0] - y) ** 2).mean() + ((self.q2(x)[:, 0] - y) ** 2).mean()

    def policy_loss(self, batch, z) -> Tensor:
        cfg = self.cfg
        a, logp, mean, log_std = self.sample(batch["s"], z)
        x = _critic_in(batch["s"], a)
        q = minimum(self.q1(x)[:, 0], self.q2(x)[:, 0])
        loss = (logp * cfg.alpha - q).mean()
        if cfg.mean_lambda:
            loss = loss + (mean * mean).mean() * cfg.mean_lambda
        if cfg.std_lambda:
            loss = loss + (log_std * log_std).mean() * cfg.std_lambda
        return loss

    def surrogates(self, batch):
        y = self.targets(batch)
        z = self.rng.standard_normal((len(batch["r"]), self.action_dim))
        return {
            "q": (lambda: self.q_loss(batch, y), self.q1.parameters() + self.q2.parameters()),
            "policy": (lambda: self.policy_loss(batch, z), self.policy.parameters()),
        }

    def update(self, batch, z=None):
        check_batch(batch, 1)
        y = self.targets(batch)
        self.q_opt.zero_grad()
        qloss = self.q_loss(batch, y)
        qloss.backward()
        self.q_opt.step()
        if z is None:
            z = self.rng.standard_normal((len(batch["r"]), self.action_dim))
        self.policy_opt.zero_grad()
        ploss = self.policy_loss(batch, z)
        ploss.backward()
        self.policy_opt.step()
        self.q1.zero_grad()
        self.q2.zero_grad()
        # Polyak with rho = 1 - soft_tau
        soft_update(self.q1_target.parameters(), self.q1.parameters(), self.cfg.soft_tau)
        soft_update(self.q2_target.parameters(), self.q2.parameters(), self.cfg.soft_tau)
        return {"q_loss": qloss.item(), "policy_loss": ploss.item()}

    def entropy(self, states, z) -> float:
        """Monte-Carlo entropy of the squashed policy, -mean log pi, at fixed draws ``z``."""
        with no_grad():
            _, logp, _, _ = self.sample(states, z)
        return float(-logp.data.mean())


def sac_update(agent: SacAgent, batch: dict) -> dict:
    return agent.update(batch)


# ---------------------------------------------------------------- NAF


def naf_advantage(mu, l_entries, u) -> np.ndarray:
    """-0.5 (u - mu)' L L' (u - mu) with L lower-triangular, diagonal exponentiated.

    ``l_entries`` holds the lower triangle row by row: (0,0), (1,0), (1,1), ...
    """
    mu, u = np.atleast_2d(mu), np.atleast_2d(u)
    l_entries = np.atleast_2d(l_entries)
    d = mu.shape[1]
    out = []
    for m_row, l_row, u_row in zip(mu, l_entries, u):
        L = np.zeros((d, d))
        L[np.tril_indices(d)] = l_row
        L[np.diag_indices(d)] = np.exp(np.diag(L))
        diff = u_row - m_row
        out.append(-0.5 * diff @ (L @ L.T) @ diff)
    return np.array(out)


class NafAgent(OffPolicyAgent):
    name = "NAF"

    def __init__(self, obs_dim, action_dim, cfg: NafConfig = NafConfig(), seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        d = action_dim
        self.n_l = d * (d + 1) // 2
        h = cfg.hidden
        self.qnet = mlp((obs_dim, h, h, d + self.n_l + 1), self.rng)
        self.target = self.qnet.clone()
        self.opt = Adam(self.qnet.parameters(), lr=cfg.lr)
        self.noise = OuNoise(d, cfg.ou_theta, cfg.ou_sigma, self.rng)
        rows, cols = np.tril_indices(d)
        # map (i, j) to its column in the L block; index n_l is an appended zero column
        off = np.full((d, d), self.n_l)
        diag_cols = np.empty(d, dtype=int)
        for k, (i, j) in enumerate(zip(rows, cols)):
            if i == j:
                diag_cols[i] = k
            else:
                off[i, j] = k
        self._off_idx = off
        self._diag_cols = diag_cols
        self._eye = np.eye(d)

    def networks(self):
        return {"qnet": self.qnet, "target": self.target}

    def on_episode_start(self):
        self.noise.reset()

    def heads(self, net: Mlp, s):
        out = net(s)
        d = self.action_dim
        return out[:, :d], out[:, d:d + self.n_l], out[:, d + self.n_l]

    def lower(self, l_entries: Tensor) -> Tensor:
        """Batch of L matrices (B, d, d) from the raw lower-triangle outputs."""
        n = l_entries.shape[0]
        padded = concat([l_entries, Tensor(np.zeros((n, 1)))], axis=1)
        off = padded[:, self._off_idx]
        diag = l_entries[:, self._diag_cols].exp()
        return off + diag.reshape(n, self.action_dim, 1) * self._eye

    def q_values(self, s, u):
        mu, l_entries, v = self.heads(self.qnet, s)
        n, d = mu.shape
        L = self.lower(l_entries)
        diff = Tensor(u) - mu
        proj = (L * diff.reshape(n, d, 1)).sum(axis=1)  # L' (u - mu)
        adv = (proj * proj).sum(axis=1) * -0.5
        return adv + v, adv, v

    def act(self, obs, explore=False):
        with no_grad():
            mu = self.qnet(np.asarray(obs, dtype=np.float64).reshape(1, -1)).data[0, :self.action_dim]
        return mu + self.noise() if explore else mu

    def targets(self, batch) -> np.ndarray:
        with no_grad():
            v2 = self.heads(self.target, batch["s2"])[2].data
        return td_target(batch["r"], v2, self.cfg.gamma, batch["d"])

    def loss(self, batch, y) -> Tensor:
        q, _, _ = self.q_values(batch["s"], batch["a"])
        return ((Tensor(y) - q) ** 2).mean()

    def surrogates(self, batch):
        y = self.targets(batch)
        return {"q": (lambda: self.loss(batch, y), self.qnet.parameters())}

    def update(self, batch):
        check_batch(batch, 1)
        y = self.targets(batch)
        self.opt.zero_grad()
        loss = self.loss(batch, y)
        loss.backward()
        self.opt.step()
        soft_update(self.target.parameters(), self.qnet.parameters(), self.cfg.tau)
        return {"loss": loss.item()}


def naf_update(agent: NafAgent, batch: dict) -> dict:
    return agent.update(batch)

