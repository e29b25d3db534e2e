"""Portfolio trading environment.

Observations are the last ``lookback`` rows of per-asset log-returns; actions
are raw vectors projected onto the weight simplex; the reward is either the
portfolio log-return or the differential Sharpe ratio of that log-return.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import DataTooShort, DegenerateReturn, EpisodeFinished, NotOnSimplex, ValidationError
from .market_data import PriceSeries, log_returns

SIMPLEX_TOL = 1e-9
DSR_EPS = 1e-8


@dataclass(frozen=True)
class EnvConfig:
    episode_length: int = 252
    use_log_return_reward: bool = True
    trading_cost_ratio: float = 0.0
    lookback: int = 64
    initial_investment: float = 1.0
    retain_cash: bool = False
    random_start_range: int = 0
    dsr_alpha: float = 0.05
    add_softmax: bool = True
    seed: int = 0
    # reward variants kept off by default; see README "Reward conventions"
    exact_log_return: bool = False
    dsr_minus_sign: bool = False

    def __post_init__(self):
        if self.lookback < 1:
            raise ValidationError("lookback must be >= 1")
        if self.episode_length < 1:
            raise ValidationError("episode_length must be >= 1")
        if not 0.0 <= self.trading_cost_ratio < 1.0:
            raise ValidationError("trading_cost_ratio must lie in [0, 1)")
        if not 0.0 < self.dsr_alpha <= 1.0:
            raise ValidationError("dsr_alpha must lie in (0, 1]")
        if self.random_start_range < 0:
            raise ValidationError("random_start_range must be >= 0")
        if not self.initial_investment > 0:
            raise ValidationError("initial_investment must be > 0")

    def replace(self, **kw) -> "EnvConfig":
        return replace(self, **kw)


@dataclass
class DsrState:
    x: float  # smoothed first moment of portfolio log-returns
    y: float  # smoothed second moment


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


# ---------------------------------------------------------------- pure pieces


def check_simplex(w: np.ndarray, tol: float = SIMPLEX_TOL) -> bool:
    return bool(np.all(np.isfinite(w)) and np.all(w >= -tol) and np.all(w <= 1 + tol) and abs(w.sum() - 1.0) <= tol)


def project_action(raw, add_softmax: bool = True) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValidationError(f"non-finite action {raw}")
    if add_softmax:
        e = np.exp(raw - raw.max())
        return e / e.sum()
    if not check_simplex(raw):
        raise NotOnSimplex(f"action {raw} is not on the simplex")
    return raw.copy()


def drift_weights(prev: np.ndarray, lr: np.ndarray) -> np.ndarray:
    """Weights after one period of price moves with no rebalancing."""
    grown = np.asarray(prev) * np.exp(np.asarray(lr))
    return grown / grown.sum()


def turnover(new: np.ndarray, drifted: np.ndarray, has_cash: bool = False) -> float:
    diff = np.abs(np.asarray(new) - np.asarray(drifted))
    if has_cash:
        diff = diff[:-1]
    return float(diff.sum())


def turnover_cost(new: np.ndarray, drifted: np.ndarray, c: float, has_cash: bool = False) -> float:
    """Proportional cost on the L1 turnover of the risky legs; the cash leg trades free."""
    return c * turnover(new, drifted, has_cash)


def portfolio_growth(weights: np.ndarray, next_lr: np.ndarray, exact: bool = False) -> float:
    if exact:
        return float(np.dot(weights, np.exp(next_lr)))
    return 1.0 + float(np.dot(weights, next_lr))


def log_return_reward(weights, next_lr, cost: float, exact: bool = False) -> float:
    """ln(1 + w . r) - cost, or ln(sum w e^r) - cost when ``exact``."""
    g = portfolio_growth(np.asarray(weights), np.asarray(next_lr), exact)
    if not g > 0:
        raise DegenerateReturn(f"portfolio growth factor {g} <= 0")
    return math.log(g) - cost


def differential_sharpe(lr: float, state: DsrState, alpha: float, minus_sign: bool = False):
    """One step of the differential Sharpe ratio.

    Returns ``(reward, new_state)``. The numerator defaults to
    ``Y*dX + 0.5*X*dY``; ``minus_sign`` switches to ``Y*dX - 0.5*X*dY``.
    The variance term is floored at DSR_EPS.
    """
    x0, y0 = state.x, state.y
    dx = lr - x0
    dy = lr * lr - y0
    half = -0.5 if minus_sign else 0.5
    num = y0 * dx + half * x0 * dy
    var = max(y0 - x0 * x0, 0.0)
    reward = num / max(var**1.5, DSR_EPS)
    return reward, DsrState(x0 + alpha * dx, y0 + alpha * dy)


def dsr_warm_start(window: np.ndarray, retain_cash: bool = False, exact: bool = False) -> DsrState:
    """Moments of the uniform portfolio's log-returns over a lookback window."""
    m = window.shape[1] + (1 if retain_cash else 0)
    w = np.full(m, 1.0 / m)
    rows = np.hstack([window, np.zeros((len(window), 1))]) if retain_cash else window
    lrs = np.array([math.log(portfolio_growth(w, r, exact)) for r in rows])
    return DsrState(float(lrs.mean()), float((lrs * lrs).mean()))


# ---------------------------------------------------------------- environment


class PortfolioEnv:
    """Single-threaded episodic market simulator over a fixed return matrix."""

    def __init__(self, data, config: EnvConfig = EnvConfig()):
        self.config = config
        if isinstance(data, PriceSeries):
            self.tickers = data.tickers
            data = log_returns(data)
        else:
            self.tickers = None
        self.returns = np.asarray(data, dtype=np.float64)
        self.returns.setflags(write=False)
        if self.returns.ndim != 2:
            raise ValidationError("return matrix must be 2-D")
        self.num_assets = self.returns.shape[1]
        self.action_size = self.num_assets + (1 if config.retain_cash else 0)
        self.obs_shape = (config.lookback, self.num_assets)
        self.rng = np.random.default_rng(config.seed)
        self._started = False
        self._done = True

    # ---------------------------------------------------------- helpers
    def _with_cash(self, lr: np.ndarray) -> np.ndarray:
        return np.append(lr, 0.0) if self.config.retain_cash else lr

    def _observe(self) -> np.ndarray:
        t = self.start + self.k
        return self.returns[t - self.config.lookback:t].copy()

    def seed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    @property
    def max_start(self) -> int:
        return self.config.lookback + self.config.random_start_range

    # ---------------------------------------------------------- API
    def reset(self, start_override: Optional[int] = None) -> np.ndarray:
        cfg = self.config
        n = len(self.returns)
        if start_override is not None:
            start = int(start_override)
            if start < cfg.lookback or start >= n:
                raise DataTooShort(f"start {start} outside [{cfg.lookback}, {n - 1}]")
        else:
            if self.max_start + 1 > n:
                raise DataTooShort(
                    f"{n} return rows cannot hold lookback {cfg.lookback} + start range "
                    f"{cfg.random_start_range} + one step"
                )
            start = int(self.rng.integers(cfg.lookback, self.max_start + 1))
        self.start = start
        self.k = 0
        self.value = cfg.initial_investment
        self.weights = np.full(self.action_size, 1.0 / self.action_size)
        self.last_lr = np.zeros(self.action_size)
        self.dsr = dsr_warm_start(
            self.returns[start - cfg.lookback:start], cfg.retain_cash, cfg.exact_log_return
        )
        self.values = [self.value]
        self.weight_history = []
        self._started = True
        self._done = False
        return self._observe()

    def step(self, raw_action) -> StepResult:
        if not self._started:
            raise EpisodeFinished("call reset() before step()")
        if self._done:
            raise EpisodeFinished("episode is over; call reset()")
        cfg = self.config
        raw = np.asarray(raw_action, dtype=np.float64).ravel()
        if raw.shape != (self.action_size,):
            raise ValidationError(f"action length {raw.size} != {self.action_size}")
        w = project_action(raw, cfg.add_softmax)
        drifted = drift_weights(self.weights, self.last_lr)
        tv = turnover(w, drifted, cfg.retain_cash)
        cost = cfg.trading_cost_ratio * tv
        next_lr = self._with_cash(self.returns[self.start + self.k])
        ell = log_return_reward(w, next_lr, cost, cfg.exact_log_return)
        self.value *= math.exp(ell)
        if cfg.use_log_return_reward:
            reward = ell
        else:
            reward, self.dsr = differential_sharpe(ell, self.dsr, cfg.dsr_alpha, cfg.dsr_minus_sign)
        self.weights = w
        self.last_lr = next_lr
        self.k += 1
        self.values.append(self.value)
        self.weight_history.append(w)
        self._done = self.k >= cfg.episode_length or self.start + self.k >= len(self.returns)
        info = {
            "portfolio_value": self.value,
            "realized_log_return": ell,
            "turnover": tv,
            "cost": cost,
            "weights": w,
        }
        return StepResult(self._observe(), float(reward), self._done, info)

    @property
    def done(self) -> bool:
        return self._done

    def episode_steps_available(self, start: int) -> int:
        return min(self.config.episode_length, len(self.returns) - start)


def reset(env: PortfolioEnv, start_override: Optional[int] = None) -> np.ndarray:
    return env.reset(start_override)


def step(env: PortfolioEnv, raw_action) -> StepResult:
    return env.step(raw_action)
