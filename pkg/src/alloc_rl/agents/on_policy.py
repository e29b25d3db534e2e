"""Policy-gradient agents: REINFORCE, A2C, TRPO and PPO.

All four share a diagonal-Gaussian policy over raw actions.
"""

from __future__ import annotations

import logging

import numpy as np

from ..errors import EmptyBatch, LineSearchFailed
from ..tensor_core import (
    Adam,
    Tensor,
    clip_grad_norm,
    concat,
    flat_grad,
    flat_params,
    gaussian_kl,
    minimum,
    no_grad,
    set_flat_params,
    unflatten,
)
from .common import GaussianPolicy, OnPolicyAgent, gae_advantages, mlp, rewards_to_go, td_target
from .config import A2cConfig, PpoConfig, ReinforceConfig, TrpoConfig

log = logging.getLogger(__name__)


def _check_rollout(rollout: dict) -> None:
    if rollout is None or len(rollout.get("r", ())) == 0:
        raise EmptyBatch("rollout holds no transitions")


def episode_returns(rewards, dones, gamma: float) -> np.ndarray:
    """Rewards-to-go restarted at every episode boundary."""
    r = np.asarray(rewards, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    out = np.empty_like(r)
    start = 0
    for t in range(r.size):
        if d[t] > 0 or t == r.size - 1:
            out[start:t + 1] = rewards_to_go(r[start:t + 1], gamma)
            start = t + 1
    return out


def _state_values(net, states) -> np.ndarray:
    with no_grad():
        return net(states).data[:, 0]


def _gae(rollout, value_net, gamma, lam) -> tuple:
    """(advantages, returns) with bootstrap from the final next-state."""
    v = _state_values(value_net, rollout["s"])
    v_last = 0.0 if rollout["d"][-1] > 0 else _state_values(value_net, rollout["s2"][-1:])[0]
    adv = gae_advantages(rollout["r"], np.append(v, v_last), gamma, lam, rollout["d"])
    return adv, adv + v


def _normalise(x: np.ndarray) -> np.ndarray:
    if x.size < 2:
        return x
    return (x - x.mean()) / (x.std() + 1e-8)


# ---------------------------------------------------------------- REINFORCE


class ReinforceAgent(OnPolicyAgent):
    """Monte-Carlo policy gradient, one update per batch of complete episodes."""

    name = "REINFORCE"
    whole_episodes = True

    def __init__(self, obs_dim, action_dim, cfg: ReinforceConfig = ReinforceConfig(), seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        self.policy = GaussianPolicy(obs_dim, action_dim, cfg.hidden, self.rng)
        self.opt = Adam(self.policy.parameters(), lr=cfg.lr)

    def networks(self):
        return {"policy": self.policy}

    def loss(self, rollout, returns=None) -> Tensor:
        if returns is None:
            returns = episode_returns(rollout["r"], rollout["d"], self.cfg.gamma)
        n_episodes = max(1.0, float(np.sum(rollout["d"])))
        logp = self.policy.log_prob(rollout["s"], rollout["a"])
        return -(logp * returns).sum() / n_episodes

    def surrogates(self, rollout):
        returns = episode_returns(rollout["r"], rollout["d"], self.cfg.gamma)
        return {"policy": (lambda: self.loss(rollout, returns), self.policy.parameters())}

    def update(self, rollout):
        _check_rollout(rollout)
        self.opt.zero_grad()
        loss = self.loss(rollout)
        loss.backward()
        self.opt.step()
        return {"loss": loss.item()}

    def train(self, env, timesteps, callback=None):
        budget = int(timesteps)
        stats = {}
        while budget > 0:
            parts = []
            for _ in range(self.cfg.episodes_per_update):
                if budget <= 0:
                    break
                part, _ = self.collect(env, budget)
                budget -= len(part["r"])
                parts.append(part)
            rollout = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
            # a budget-truncated tail still counts as one episode
            rollout["d"][-1] = 1.0
            stats = self.update(rollout)
            if callback is not None:
                callback(self, self.steps, stats)
        return stats


def reinforce_update(agent: ReinforceAgent, trajectories: dict) -> dict:
    return agent.update(trajectories)


# ---------------------------------------------------------------- A2C


def a2c_td_error(r, q_next, q, gamma: float, done) -> np.ndarray:
    return td_target(r, q_next, gamma, done) - np.asarray(q, dtype=np.float64)


class A2cAgent(OnPolicyAgent):
    """Synchronous actor-critic with an action-value critic.

    The critic regresses on the TD target. The actor's score-function weight is
    Q(s, a) by default, or the TD error when ``actor_weight="td_error"``.
    """

    name = "A2C"

    def __init__(self, obs_dim, action_dim, cfg: A2cConfig = A2cConfig(), seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        self.policy = GaussianPolicy(obs_dim, action_dim, cfg.hidden, self.rng)
        self.critic = mlp((obs_dim + action_dim, cfg.hidden, cfg.hidden, 1), self.rng)
        self.actor_opt = Adam(self.policy.parameters(), lr=cfg.actor_lr)
        self.critic_opt = Adam(self.critic.parameters(), lr=cfg.critic_lr)

    def networks(self):
        return {"policy": self.policy, "critic": self.critic}

    def batch_steps(self):
        return self.cfg.n_steps

    def _q(self, s, a) -> Tensor:
        return self.critic(concat([Tensor(s), Tensor(a)], axis=-1))[:, 0]

    def td_errors(self, rollout, next_actions=None) -> tuple:
        """(TD target, TD error) with a' drawn from the current policy at s'."""
        if next_actions is None:
            next_actions, _ = self.policy.sample(rollout["s2"], self.rng)
        with no_grad():
            q_next = self._q(rollout["s2"], next_actions).data
            q = self._q(rollout["s"], rollout["a"]).data
        y = td_target(rollout["r"], q_next, self.cfg.gamma, rollout["d"])
        return y, y - q

    def targets(self, rollout, next_actions=None) -> tuple:
        """(critic target, actor weight per sample)."""
        y, delta = self.td_errors(rollout, next_actions)
        if self.cfg.actor_weight == "td_error":
            return y, delta
        with no_grad():
            return y, self._q(rollout["s"], rollout["a"]).data

    def critic_loss(self, rollout, y) -> Tensor:
        return ((self._q(rollout["s"], rollout["a"]) - y) ** 2).mean()

    def actor_loss(self, rollout, adv) -> Tensor:
        logp = self.policy.log_prob(rollout["s"], rollout["a"])
        loss = -(logp * adv).mean()
        if self.cfg.entropy_beta:
            loss = loss - self.policy.entropy() * self.cfg.entropy_beta
        return loss

    def surrogates(self, rollout):
        y, adv = self.targets(rollout)
        return {
            "critic": (lambda: self.critic_loss(rollout, y), self.critic.parameters()),
            "actor": (lambda: self.actor_loss(rollout, adv), self.policy.parameters()),
        }

    def update(self, rollout):
        _check_rollout(rollout)
        cfg = self.cfg
        y, adv = self.targets(rollout)
        self.critic_opt.zero_grad()
        closs = self.critic_loss(rollout, y)
        closs.backward()
        clip_grad_norm(self.critic.parameters(), cfg.max_grad_norm)
        self.critic_opt.step()
        self.actor_opt.zero_grad()
        aloss = self.actor_loss(rollout, adv)
        aloss.backward()
        clip_grad_norm(self.policy.parameters(), cfg.max_grad_norm)
        self.actor_opt.step()
        return {"critic_loss": closs.item(), "actor_loss": aloss.item()}


def a2c_update(agent: A2cAgent, rollout: dict) -> dict:
    return agent.update(rollout)


# ---------------------------------------------------------------- TRPO


def conjugate_gradient(matvec, b, iters: int = 10, tol: float = 1e-10) -> np.ndarray:
    """Approximate solution of A x = b for symmetric positive-definite A."""
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    for _ in range(iters):
        if rr <= tol:
            break
        ap = matvec(p)
        alpha = rr / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def mean_kl(old_mean, old_log_std, new_mean, new_log_std) -> float:
    """Batch-mean KL(old || new) of diagonal Gaussians."""
    with no_grad():
        kl = gaussian_kl(Tensor(old_mean), Tensor(np.broadcast_to(old_log_std, np.shape(old_mean))),
                         Tensor(new_mean), Tensor(np.broadcast_to(new_log_std, np.shape(new_mean))))
    return float(np.mean(kl.data))


class TrpoAgent(OnPolicyAgent):
    """Natural-gradient step on the importance-sampled surrogate under a KL budget."""

    name = "TRPO"

    def __init__(self, obs_dim, action_dim, cfg: TrpoConfig = TrpoConfig(), seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        self.policy = GaussianPolicy(obs_dim, action_dim, cfg.hidden, self.rng)
        self.value = mlp((obs_dim, cfg.hidden, cfg.hidden, 1), self.rng, activation="tanh")
        self.value_opt = Adam(self.value.parameters(), lr=cfg.lr)
        self.last_kl = 0.0

    def networks(self):
        return {"policy": self.policy, "value": self.value}

    def batch_steps(self):
        return self.cfg.episode_length

    def surrogate(self, rollout, adv, old_logp) -> Tensor:
        logp = self.policy.log_prob(rollout["s"], rollout["a"])
        return ((logp - old_logp).exp() * adv).mean()

    def value_loss(self, states, returns) -> Tensor:
        loss = ((self.value(states)[:, 0] - returns) ** 2).mean()
        reg = self.cfg.l2_reg
        if reg:
            for p in self.value.parameters():
                loss = loss + (p * p).sum() * reg
        return loss

    def fisher_vector(self, states, v: np.ndarray) -> np.ndarray:
        """Damped Fisher-vector product of the mean-KL Hessian at the current policy."""
        params = self.policy.parameters()
        net_params = params[:-1]
        parts = unflatten(params, v)
        n = states.shape[0]
        _, dmean = self.policy.net.jvp(states, parts[:-1])
        var = np.exp(2.0 * np.clip(self.policy.log_std.data, -20.0, 2.0))
        for p in net_params:
            p.grad = None
        out = self.policy.net(states)
        out.backward(dmean / var / n)
        g_net = flat_grad(net_params)
        g_std = 2.0 * parts[-1]
        for p in net_params:
            p.grad = None
        return np.concatenate([g_net, g_std.ravel()]) + self.cfg.damping * v

    def fit_value(self, states, returns) -> float:
        loss = None
        for _ in range(self.cfg.val_opt_iter):
            self.value_opt.zero_grad()
            loss = self.value_loss(states, returns)
            loss.backward()
            self.value_opt.step()
        return float(loss.item()) if loss is not None else 0.0

    def surrogates(self, rollout):
        adv, returns = _gae(rollout, self.value, self.cfg.gamma, self.cfg.lam)
        adv = _normalise(adv)
        with no_grad():
            old_logp = self.policy.log_prob(rollout["s"], rollout["a"]).data
        return {
            "policy": (lambda: self.surrogate(rollout, adv, old_logp), self.policy.parameters()),
            "value": (lambda: self.value_loss(rollout["s"], returns), self.value.parameters()),
        }

    def update(self, rollout):
        _check_rollout(rollout)
        cfg = self.cfg
        states = rollout["s"]
        adv, returns = _gae(rollout, self.value, cfg.gamma, cfg.lam)
        adv = _normalise(adv)
        params = self.policy.parameters()
        with no_grad():
            old_mean, old_log_std = self.policy.dist(states)
            old_mean, old_log_std = old_mean.data, old_log_std.data
            old_logp = self.policy.log_prob(states, rollout["a"]).data

        for p in params:
            p.grad = None
        surr = self.surrogate(rollout, adv, old_logp)
        surr.backward()
        g = flat_grad(params)
        for p in params:
            p.grad = None
        old_surr = surr.item()

        x = conjugate_gradient(lambda v: self.fisher_vector(states, v), g, cfg.cg_iters)
        shs = float(x @ self.fisher_vector(states, x))
        stats = {"surrogate": old_surr, "accepted": False, "kl": 0.0}
        if not np.isfinite(shs) or shs <= 0:
            log.warning("TRPO: non-positive curvature along the search direction; skipping step")
        else:
            step = np.sqrt(2.0 * cfg.max_kl / shs) * x
            theta = flat_params(params)
            try:
                stats.update(self._line_search(rollout, adv, old_logp, old_mean, old_log_std,
                                               theta, step, old_surr))
            except LineSearchFailed as exc:
                set_flat_params(params, theta)
                log.info("TRPO: %s", exc)
        self.last_kl = stats["kl"]
        stats["value_loss"] = self.fit_value(states, returns)
        return stats

    def _line_search(self, rollout, adv, old_logp, old_mean, old_log_std, theta, step, old_surr):
        cfg = self.cfg
        params = self.policy.parameters()
        frac = 1.0
        for _ in range(cfg.backtrack_steps):
            set_flat_params(params, theta + frac * step)
            with no_grad():
                new_surr = self.surrogate(rollout, adv, old_logp).item()
                mean, log_std = self.policy.dist(rollout["s"])
            kl = mean_kl(old_mean, old_log_std, mean.data, log_std.data)
            if new_surr > old_surr and kl <= cfg.max_kl:
                return {"accepted": True, "kl": kl, "surrogate": new_surr, "step_fraction": frac}
            frac *= cfg.backtrack_coef
        raise LineSearchFailed(f"no acceptable step after {cfg.backtrack_steps} backtracks")


def trpo_update(agent: TrpoAgent, rollout: dict) -> dict:
    return agent.update(rollout)


# ---------------------------------------------------------------- PPO


def ppo_g(adv, eps: float) -> np.ndarray:
    """(1 + eps) A where A >= 0, (1 - eps) A otherwise."""
    adv = np.asarray(adv, dtype=np.float64)
    return np.where(adv >= 0, (1.0 + eps) * adv, (1.0 - eps) * adv)


def ppo_clip_objective(ratio, adv, eps: float) -> np.ndarray:
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


class PpoAgent(OnPolicyAgent):
    """Clipped-ratio surrogate optimised for several epochs per batch."""

    name = "PPO"

    def __init__(self, obs_dim, action_dim, cfg: PpoConfig = PpoConfig(), seed=0):
        super().__init__(obs_dim, action_dim, cfg, seed)
        self.policy = GaussianPolicy(obs_dim, action_dim, cfg.hidden, self.rng)
        self.value = mlp((obs_dim, cfg.hidden, cfg.hidden, 1), self.rng, activation="tanh")
        self.policy_opt = Adam(self.policy.parameters(), lr=cfg.lr)
        self.value_opt = Adam(self.value.parameters(), lr=cfg.lr)

    def networks(self):
        return {"policy": self.policy, "value": self.value}

    def batch_steps(self):
        return self.cfg.timesteps_per_batch

    def clipped_loss(self, s, a, adv, old_logp) -> Tensor:
        eps = self.cfg.clip
        ratio = (self.policy.log_prob(s, a) - old_logp).exp()
        adv = Tensor(adv)
        return -minimum(ratio * adv, ratio.clip(1.0 - eps, 1.0 + eps) * adv).mean()

    def value_loss(self, s, returns) -> Tensor:
        return ((self.value(s)[:, 0] - returns) ** 2).mean()

    def _prepare(self, rollout):
        adv, returns = _gae(rollout, self.value, self.cfg.gamma, self.cfg.lam)
        if self.cfg.normalize_advantages:
            adv = _normalise(adv)
        with no_grad():
            old_logp = self.policy.log_prob(rollout["s"], rollout["a"]).data
        return adv, returns, old_logp

    def surrogates(self, rollout):
        adv, returns, old_logp = self._prepare(rollout)
        return {
            "policy": (lambda: self.clipped_loss(rollout["s"], rollout["a"], adv, old_logp),
                       self.policy.parameters()),
            "value": (lambda: self.value_loss(rollout["s"], returns), self.value.parameters()),
        }

    def update(self, rollout):
        _check_rollout(rollout)
        cfg = self.cfg
        adv, returns, old_logp = self._prepare(rollout)
        n = len(adv)
        pl = vl = None
        for _ in range(cfg.n_updates_per_iteration):
            order = self.rng.permutation(n)
            for idx in np.array_split(order, min(cfg.minibatches, n)):
                s, a = rollout["s"][idx], rollout["a"][idx]
                self.policy_opt.zero_grad()
                pl = self.clipped_loss(s, a, adv[idx], old_logp[idx])
                pl.backward()
                self.policy_opt.step()
                self.value_opt.zero_grad()
                vl = self.value_loss(s, returns[idx])
                vl.backward()
                self.value_opt.step()
        return {"policy_loss": pl.item(), "value_loss": vl.item()}


def ppo_update(agent: PpoAgent, rollout: dict) -> dict:
    return agent.update(rollout)

