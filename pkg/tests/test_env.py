import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alloc_rl.env import (
    DsrState,
    EnvConfig,
    PortfolioEnv,
    check_simplex,
    differential_sharpe,
    drift_weights,
    dsr_warm_start,
    log_return_reward,
    project_action,
    turnover_cost,
)
from alloc_rl.errors import DataTooShort, DegenerateReturn, EpisodeFinished, NotOnSimplex, ValidationError


def _env(returns, **kw):
    return PortfolioEnv(np.asarray(returns, dtype=float), EnvConfig(**kw))


def test_config_validation():
    for bad in ({"lookback": 0}, {"episode_length": 0}, {"trading_cost_ratio": 1.0},
                {"dsr_alpha": 0.0}, {"dsr_alpha": 1.5}, {"random_start_range": -1}):
        with pytest.raises(ValidationError):
            EnvConfig(**bad)


def test_reset_start_rules():
    r = np.zeros((200, 2))
    env = _env(r, lookback=10, random_start_range=0)
    for _ in range(5):
        env.reset()
        assert env.start == 10
    a = _env(r, lookback=10, random_start_range=50, seed=4)
    b = _env(r, lookback=10, random_start_range=50, seed=4)
    starts_a = [(a.reset(), a.start)[1] for _ in range(10)]
    starts_b = [(b.reset(), b.start)[1] for _ in range(10)]
    assert starts_a == starts_b
    assert all(10 <= s <= 60 for s in starts_a)
    with pytest.raises(DataTooShort):
        _env(np.zeros((50, 2)), lookback=64).reset()


def test_project_action_examples():
    np.testing.assert_allclose(project_action([0, 0, 0]), [1 / 3] * 3)
    np.testing.assert_allclose(project_action([math.log(2), 0]), [2 / 3, 1 / 3], rtol=1e-15)
    with pytest.raises(NotOnSimplex):
        project_action([0.5, 0.6], add_softmax=False)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=12))
def test_projection_on_simplex(raw):
    assert check_simplex(project_action(raw))


def test_drift_examples():
    np.testing.assert_array_equal(drift_weights([0.3, 0.7], [0.0, 0.0]), [0.3, 0.7])
    np.testing.assert_allclose(drift_weights([0.5, 0.5], [math.log(2), 0]), [2 / 3, 1 / 3], rtol=1e-15)
    np.testing.assert_array_equal(drift_weights([1.0, 0.0], [-0.3, 0.9]), [1.0, 0.0])


def test_turnover_cost_examples():
    w = np.array([0.2, 0.8])
    assert turnover_cost(w, w, 0.01) == 0
    assert turnover_cost([1, 0], [0, 1], 0.0) == 0
    assert turnover_cost(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.01) == pytest.approx(0.02, abs=1e-15)
    # the cash leg (last) is not charged
    assert turnover_cost(np.array([0.0, 1.0]), np.array([1.0, 0.0]), 0.01, has_cash=True) == pytest.approx(0.01)


def test_log_return_reward_examples():
    assert log_return_reward([0.5, 0.5], [0.02, -0.02], 0.0) == pytest.approx(0.0, abs=1e-15)
    assert log_return_reward([0.4, 0.6], [0.0, 0.0], 0.003) == pytest.approx(-0.003, abs=1e-15)
    assert log_return_reward([1, 0], [0.1, 0.5], 0.0) == pytest.approx(0.0953101798, abs=1e-10)
    assert log_return_reward([1, 0], [0.1, 0.5], 0.0, exact=True) == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(DegenerateReturn):
        log_return_reward([1.0], [-1.0], 0.0)


def test_dsr_examples():
    r, s = differential_sharpe(0.01, DsrState(0.01, 1e-4), 0.1)
    assert r == 0.0 and s.x == pytest.approx(0.01) and s.y == pytest.approx(1e-4)
    _, s = differential_sharpe(0.03, DsrState(0.01, 0.0004), 1.0)
    assert s.x == 0.03 and s.y == pytest.approx(0.0009, abs=1e-18)
    # frozen hand oracle: dX = 0.01, dY = 0, num = 0.0004 * 0.01, den = 0.0003 ** 1.5
    r, s = differential_sharpe(0.02, DsrState(0.01, 0.0004), 0.05)
    assert r == pytest.approx(0.7698003589195010, rel=1e-12)
    assert (s.x, s.y) == (pytest.approx(0.0105), pytest.approx(0.0004))


def test_dsr_sign_variants():
    st0 = DsrState(0.01, 0.0005)
    plus, _ = differential_sharpe(0.03, st0, 0.05)
    minus, _ = differential_sharpe(0.03, st0, 0.05, minus_sign=True)
    dx, dy = 0.02, 0.0009 - 0.0005
    den = (0.0005 - 0.0001) ** 1.5
    assert plus == pytest.approx((0.0005 * dx + 0.5 * 0.01 * dy) / den, rel=1e-12)
    assert minus == pytest.approx((0.0005 * dx - 0.5 * 0.01 * dy) / den, rel=1e-12)


@given(st.lists(st.floats(-0.05, 0.05), min_size=2, max_size=64))
def test_warm_start_variance_nonnegative(col):
    window = np.column_stack([col, col[::-1]])
    s = dsr_warm_start(window)
    assert s.y >= s.x * s.x - 1e-9


def test_step_zero_returns():
    env = _env(np.zeros((20, 2)), lookback=3, episode_length=2)
    env.reset()
    for _ in range(2):
        res = env.step(np.array([0.3, -0.1]))
        assert res.reward == 0.0
    assert res.done and env.value == 1.0


def test_step_compounding_single_asset():
    # exact compounding: value grows by e^{0.01} per step
    env = _env(np.full((20, 1), 0.01), lookback=2, episode_length=3, initial_investment=2.0,
               exact_log_return=True)
    env.reset()
    for _ in range(3):
        res = env.step([0.0])
    assert res.info["portfolio_value"] == pytest.approx(2.0 * math.exp(0.03), rel=1e-14)
    with pytest.raises(EpisodeFinished):
        env.step([0.0])
    # default reward ln(1 + w.r) treats the log-return as a simple return
    env = _env(np.full((20, 1), 0.01), lookback=2, episode_length=3, initial_investment=2.0)
    env.reset()
    for _ in range(3):
        res = env.step([0.0])
    assert res.info["portfolio_value"] == pytest.approx(2.0 * 1.01**3, rel=1e-14)


def test_step_before_reset():
    with pytest.raises(EpisodeFinished):
        _env(np.zeros((20, 2)), lookback=3).step([0, 0])


def test_done_at_data_end():
    env = _env(np.zeros((6, 2)), lookback=3, episode_length=100)
    env.reset()
    steps = 0
    while not env.done:
        env.step([0, 0])
        steps += 1
    assert steps == 3


def test_drift_feeds_cost():
    # after one step the held weights drift; re-requesting the old target costs turnover
    r = np.array([[0.0, 0.0]] * 3 + [[math.log(2), 0.0]] * 5)
    env = _env(r, lookback=3, trading_cost_ratio=0.01, episode_length=3)
    env.reset()
    first = env.step(np.zeros(2))
    assert first.info["turnover"] == 0
    second = env.step(np.zeros(2))
    np.testing.assert_allclose(second.info["turnover"], 2 * (2 / 3 - 1 / 2))


def test_observation_slices(rng):
    r = rng.normal(0, 0.01, (120, 3))
    env = _env(r, lookback=7, random_start_range=30, episode_length=20, seed=5)
    obs = env.reset()
    s = env.start
    np.testing.assert_array_equal(obs, r[s - 7:s])
    for k in range(1, 21):
        obs = env.step(rng.normal(size=3)).observation
        np.testing.assert_array_equal(obs, r[s + k - 7:s + k])


def test_cash_only_reward_zero(rng):
    r = rng.normal(0, 0.02, (60, 2))
    env = _env(r, lookback=5, retain_cash=True, episode_length=20, add_softmax=False)
    env.reset()
    for _ in range(20):
        res = env.step(np.array([0.0, 0.0, 1.0]))
        assert res.reward == 0.0


def test_dsr_reward_path(rng):
    r = rng.normal(0, 0.01, (80, 2))
    env = _env(r, lookback=10, episode_length=30, use_log_return_reward=False, dsr_alpha=0.1)
    env.reset()
    state = dsr_warm_start(r[env.start - 10:env.start])
    for _ in range(30):
        res = env.step(rng.normal(size=2))
        expected, state = differential_sharpe(res.info["realized_log_return"], state, 0.1)
        assert res.reward == expected


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.2))
def test_weights_always_on_simplex(seed, cost):
    rng = np.random.default_rng(seed)
    env = _env(rng.normal(0, 0.02, (40, 3)), lookback=4, episode_length=10, trading_cost_ratio=cost)
    env.reset()
    while not env.done:
        res = env.step(rng.normal(0, 5, 3))
        assert check_simplex(res.info["weights"])
