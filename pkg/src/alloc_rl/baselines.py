"""Baseline allocation policies: uniform, random, buy-and-hold and Markowitz.

Every policy returns weights already on the simplex, so the environment that
evaluates them runs with ``add_softmax=False``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, SolverDiverged, TooFewRows, ValidationError

log = logging.getLogger(__name__)

SIGMA_RIDGE = 1e-8


@dataclass(frozen=True)
class FrontierConfig:
    num_targets: int = 50
    risk_free: float = 0.0  # per-step rate, same units as the window's mean return

    def __post_init__(self):
        if self.num_targets < 2:
            raise ValidationError("num_targets must be >= 2")


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - x.max())
    return e / e.sum()


def uniform_policy(m: int) -> np.ndarray:
    if m < 1:
        raise ValidationError("need at least one asset")
    return np.full(m, 1.0 / m)


def random_policy(m: int, rng: np.random.Generator) -> np.ndarray:
    if m < 1:
        raise ValidationError("need at least one asset")
    u = rng.uniform(0.0, 1.0, m)
    return u / u.sum()


def buy_and_hold_policy(initial_obs: np.ndarray) -> np.ndarray:
    obs = np.asarray(initial_obs, dtype=np.float64)
    if obs.size == 0:
        raise ValidationError("empty observation")
    return softmax(obs.mean(axis=0))


def covariance(window: np.ndarray) -> np.ndarray:
    x = np.asarray(window, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooFewRows("covariance needs at least 2 rows")
    c = x - x.mean(axis=0)
    s = c.T @ c / (x.shape[0] - 1)
    return 0.5 * (s + s.T)


# ---------------------------------------------------------------- QP


def _best_shift(nu: np.ndarray, a: np.ndarray):
    """max over s of min_k (nu_k - s * a_k); returns (value, s)."""
    nz = np.abs(a) > 1e-15
    fixed = nu[~nz].min() if np.any(~nz) else np.inf
    if not np.any(nz):
        return fixed, 0.0
    pos, neg = a[nz] > 0, a[nz] < 0
    if not np.any(pos) or not np.any(neg):
        # every line heads the same way: push s far enough that they clear `fixed`
        return fixed, None
    # concave piecewise-linear; its max sits at an intersection of two lines
    nn, aa = nu[nz], a[nz]
    best, best_s = -np.inf, 0.0
    for i in range(len(aa)):
        for j in range(i + 1, len(aa)):
            if aa[i] == aa[j]:
                continue
            s = (nn[i] - nn[j]) / (aa[i] - aa[j])
            v = min(np.min(nn - s * aa), fixed)
            if v > best:
                best, best_s = v, s
    return best, best_s


def markowitz_solve(mu, sigma, mu_target: float, max_iter: int | None = None) -> np.ndarray:
    """Long-only minimum-variance weights with a target mean return.

    Primal active-set method on ``min w'Sw  s.t.  sum w = 1, mu'w = target,
    w >= 0`` with S regularised by SIGMA_RIDGE * I.
    """
    mu = np.asarray(mu, dtype=np.float64)
    n = mu.size
    q = np.asarray(sigma, dtype=np.float64)
    if q.shape != (n, n):
        raise ValidationError(f"sigma shape {q.shape} does not match {n} assets")
    q = 0.5 * (q + q.T) + SIGMA_RIDGE * np.eye(n)
    lo, hi = float(mu.min()), float(mu.max())
    scale = max(abs(lo), abs(hi), 1e-300)
    if mu_target < lo - 1e-12 * scale or mu_target > hi + 1e-12 * scale:
        raise Infeasible(f"target {mu_target} outside attainable range [{lo}, {hi}]")
    t = min(max(float(mu_target), lo), hi)
    A = np.vstack([np.ones(n), mu])
    b = np.array([1.0, t])

    # feasible vertex on the segment between the lowest and highest mean assets
    i, j = int(np.argmin(mu)), int(np.argmax(mu))
    w = np.zeros(n)
    if hi - lo <= 1e-15 * scale:
        w[i] = 1.0
    else:
        w[i] = (hi - t) / (hi - lo)
        w[j] = 1.0 - w[i]
    active = w <= 0.0
    max_iter = max_iter or 50 * n + 100

    for _ in range(max_iter):
        free = np.flatnonzero(~active)
        af = A[:, free]
        nf = free.size
        kkt = np.zeros((nf + 2, nf + 2))
        kkt[:nf, :nf] = q[np.ix_(free, free)]
        kkt[:nf, nf:] = -af.T
        kkt[nf:, :nf] = af
        rhs = np.concatenate([np.zeros(nf), b])
        mu_f = mu[free]
        full_rank = nf >= 2 and (mu_f.max() - mu_f.min()) > 1e-12 * scale
        if full_rank:
            sol = np.linalg.solve(kkt, rhs)
        else:
            sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        w_star, lam = sol[:nf], sol[nf:]
        p = w_star - w[free]
        if np.max(np.abs(p)) <= 1e-13:
            w[free] = w_star
            idle = np.flatnonzero(active)
            if idle.size == 0:
                break
            nu = (q @ w - A.T @ lam)[idle]
            if full_rank:
                value, shift = float(nu.min()), 0.0
                nu_at = nu
            else:
                # multipliers are only determined up to the null direction of A_F'
                c = float(mu_f[0])
                a = (c - mu)[idle]
                value, shift = _best_shift(nu, a)
                if shift is None:
                    nu_at = np.where(np.abs(a) > 1e-15, np.inf, nu)
                else:
                    nu_at = nu - shift * a
            if value >= -1e-12:
                break
            drop = idle[int(np.argmin(nu_at))]
            active[drop] = False
            continue
        # step toward the equality-constrained minimiser until a bound blocks
        alpha, block = 1.0, None
        for k_local, k in enumerate(free):
            if p[k_local] < 0:
                ratio = -w[k] / p[k_local]
                if ratio < alpha:
                    alpha, block = ratio, k
        w[free] += alpha * p
        if block is not None:
            w[block] = 0.0
            active[block] = True
    else:
        raise SolverDiverged(f"active-set did not converge in {max_iter} iterations")

    w = np.where(w < 0, 0.0, w)
    return w / w.sum()


def qp_objective(w, sigma) -> float:
    w = np.asarray(w)
    return float(w @ np.asarray(sigma) @ w)


def markowitz_policy(obs: np.ndarray, cfg: FrontierConfig = FrontierConfig()) -> np.ndarray:
    """Max-Sharpe point of a long-only frontier estimated from the window."""
    window = np.asarray(obs, dtype=np.float64)
    sigma = covariance(window)
    m = window.shape[1]
    if np.all(np.diag(sigma) <= 1e-20):
        log.debug("zero-variance window; falling back to uniform weights")
        return uniform_policy(m)
    mu = window.mean(axis=0)
    q = sigma + SIGMA_RIDGE * np.eye(m)
    best, best_score = None, -np.inf
    for target in np.linspace(mu.min(), mu.max(), cfg.num_targets):
        w = markowitz_solve(mu, sigma, target)
        score = (w @ mu - cfg.risk_free) / np.sqrt(w @ q @ w)
        if score > best_score + 1e-15:
            best, best_score = w, score
    return best


# ---------------------------------------------------------------- policy objects


class BaselinePolicy:
    """Common surface shared with the learning agents' evaluation path."""

    name = "baseline"
    outputs_weights = True

    def __init__(self, action_size: int, num_assets: int | None = None, seed: int = 0):
        self.action_size = action_size
        self.num_assets = num_assets if num_assets is not None else action_size
        self.rng = np.random.default_rng(seed)

    def reset(self) -> None:
        pass

    def act(self, obs, explore: bool = False) -> np.ndarray:
        raise NotImplementedError

    def _pad(self, w: np.ndarray) -> np.ndarray:
        if w.size == self.action_size:
            return w
        return np.append(w, np.zeros(self.action_size - w.size))

    @staticmethod
    def _with_cash_column(obs: np.ndarray, size: int) -> np.ndarray:
        if obs.shape[1] == size:
            return obs
        return np.hstack([obs, np.zeros((obs.shape[0], size - obs.shape[1]))])


class UniformPolicy(BaselinePolicy):
    name = "Uniform"

    def act(self, obs, explore=False):
        return uniform_policy(self.action_size)


class RandomPolicy(BaselinePolicy):
    name = "Random"

    def act(self, obs, explore=False):
        return random_policy(self.action_size, self.rng)


class BuyAndHoldPolicy(BaselinePolicy):
    name = "Buy And Hold"

    def reset(self):
        self._weights = None

    def act(self, obs, explore=False):
        if getattr(self, "_weights", None) is None:
            self._weights = buy_and_hold_policy(self._with_cash_column(np.asarray(obs), self.action_size))
        return self._weights.copy()


class MarkowitzPolicy(BaselinePolicy):
    """Rebalances to the max-Sharpe frontier portfolio every step; cash gets zero weight."""

    name = "MPT"

    def __init__(self, action_size, num_assets=None, seed=0, cfg: FrontierConfig = FrontierConfig()):
        super().__init__(action_size, num_assets, seed)
        self.cfg = cfg

    def act(self, obs, explore=False):
        return self._pad(markowitz_policy(obs, self.cfg))


BASELINES = {
    "uniform": UniformPolicy,
    "random": RandomPolicy,
    "buy_and_hold": BuyAndHoldPolicy,
    "markowitz": MarkowitzPolicy,
}
