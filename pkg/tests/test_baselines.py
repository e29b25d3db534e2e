import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alloc_rl.baselines import (
    BuyAndHoldPolicy,
    FrontierConfig,
    MarkowitzPolicy,
    RandomPolicy,
    UniformPolicy,
    buy_and_hold_policy,
    covariance,
    markowitz_policy,
    markowitz_solve,
    qp_objective,
    random_policy,
    uniform_policy,
)
from alloc_rl.errors import Infeasible, TooFewRows, ValidationError


def _on_simplex(w):
    return np.all(w >= 0) and abs(w.sum() - 1) < 1e-12


def grid_minimum(mu, sigma, target, points=20001):
    """Brute-force minimum of w'Sw over the feasible set, parametrised by w0."""
    mu = np.asarray(mu)
    if mu.size == 2:
        w0 = (target - mu[1]) / (mu[0] - mu[1])
        w = np.array([w0, 1 - w0])
        return qp_objective(w, sigma)
    t = np.linspace(0.0, 1.0, points)
    w1 = (target - mu[0] * t - mu[2] * (1 - t)) / (mu[1] - mu[2])
    w = np.stack([t, w1, 1 - t - w1], axis=1)
    ok = np.all(w >= -1e-12, axis=1)
    w = w[ok]
    return float(np.min(np.einsum("ij,jk,ik->i", w, sigma, w)))


def test_uniform_examples():
    np.testing.assert_array_equal(uniform_policy(4), [0.25] * 4)
    np.testing.assert_array_equal(uniform_policy(1), [1.0])
    with pytest.raises(ValidationError):
        uniform_policy(0)


@given(st.integers(1, 30))
def test_uniform_sums_to_one(m):
    assert uniform_policy(m).sum() == pytest.approx(1.0, abs=1e-12)


def test_random_examples():
    a = random_policy(5, np.random.default_rng(3))
    b = random_policy(5, np.random.default_rng(3))
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(random_policy(1, np.random.default_rng(9)), [1.0])


@given(st.integers(1, 12), st.integers(0, 2**31))
def test_random_on_simplex(m, seed):
    assert _on_simplex(random_policy(m, np.random.default_rng(seed)))


def test_random_policy_redraws_each_step():
    p = RandomPolicy(3, seed=0)
    assert not np.array_equal(p.act(None), p.act(None))


def test_buy_and_hold_examples():
    obs = np.array([[0.1, 0.1], [0.3, 0.3]])
    np.testing.assert_allclose(buy_and_hold_policy(obs), [0.5, 0.5])
    obs = np.array([[np.log(2), 0.0]] * 3)
    np.testing.assert_allclose(buy_and_hold_policy(obs), [2 / 3, 1 / 3], atol=1e-15)


def test_buy_and_hold_frozen_within_episode():
    rng = np.random.default_rng(0)
    p = BuyAndHoldPolicy(3, num_assets=2)
    p.reset()
    first = p.act(rng.normal(size=(8, 2)))
    for _ in range(5):
        np.testing.assert_array_equal(p.act(rng.normal(size=(8, 2))), first)
    p.reset()
    assert not np.array_equal(p.act(rng.normal(size=(8, 2))), first)


def test_covariance_examples():
    np.testing.assert_array_equal(covariance(np.ones((5, 3))), np.zeros((3, 3)))
    x = np.array([[1.0, 2.0], [3.0, 6.0]])
    np.testing.assert_allclose(covariance(x), [[2.0, 4.0], [4.0, 8.0]])
    with pytest.raises(TooFewRows):
        covariance(np.ones((1, 2)))


@given(st.integers(2, 20), st.integers(1, 5), st.integers(0, 10_000))
def test_covariance_symmetric_psd_diag(n, m, seed):
    s = covariance(np.random.default_rng(seed).normal(size=(n, m)))
    np.testing.assert_array_equal(s, s.T)
    assert np.all(np.diag(s) >= 0)


def test_markowitz_examples():
    w = markowitz_solve([0.1, 0.2], np.eye(2), 0.15)
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-9)
    w = markowitz_solve([0.1, 0.1], np.diag([1.0, 4.0]), 0.1)
    np.testing.assert_allclose(w, [0.8, 0.2], atol=1e-6)
    with pytest.raises(Infeasible):
        markowitz_solve([0.1, 0.2], np.eye(2), 0.5)
    with pytest.raises(ValidationError):
        markowitz_solve([0.1, 0.2], np.eye(3), 0.15)


@pytest.mark.parametrize("m", [2, 3])
def test_markowitz_matches_grid_oracle(m):
    for seed in range(100):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(m, m))
        sigma = a @ a.T + 0.05 * np.eye(m)
        mu = rng.normal(0.0, 0.1, m)
        target = rng.uniform(mu.min(), mu.max())
        w = markowitz_solve(mu, sigma, target)
        assert _on_simplex(w)
        assert w @ mu == pytest.approx(target, abs=1e-9)
        assert qp_objective(w, sigma) <= grid_minimum(mu, sigma, target) + 1e-6


@given(st.integers(2, 6), st.integers(0, 10_000), st.floats(0.0, 1.0))
def test_markowitz_feasible_for_larger_problems(m, seed, frac):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(m, m))
    sigma = a @ a.T
    mu = rng.normal(0.0, 0.1, m)
    target = mu.min() + frac * (mu.max() - mu.min())
    w = markowitz_solve(mu, sigma, target)
    assert np.all(w >= 0) and abs(w.sum() - 1) < 1e-9
    assert abs(w @ mu - target) < 1e-8


def test_markowitz_policy_examples():
    # Hadamard columns: equal means, orthogonal, equal variance
    h = np.array([[1, 1, 1], [-1, 1, -1], [1, -1, -1], [-1, -1, 1]], dtype=float)
    obs = 0.01 * h + 0.002
    w = markowitz_policy(obs)
    np.testing.assert_allclose(w, [1 / 3] * 3, atol=1e-6)
    np.testing.assert_array_equal(markowitz_policy(np.full((5, 3), 0.01)), [1 / 3] * 3)
    x = np.array([[1.0, -1.0], [-1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]) * 0.01
    dominant = x + np.array([0.005, 0.0])
    assert markowitz_policy(dominant)[0] > 0.5


def test_frontier_config_validation():
    with pytest.raises(ValidationError):
        FrontierConfig(num_targets=1)


@pytest.mark.parametrize("cls", [UniformPolicy, RandomPolicy, BuyAndHoldPolicy, MarkowitzPolicy])
def test_policy_objects_on_simplex_with_cash(cls):
    rng = np.random.default_rng(4)
    p = cls(4, num_assets=3, seed=2)
    p.reset()
    for _ in range(3):
        w = p.act(rng.normal(0, 0.01, size=(10, 3)))
        assert w.shape == (4,) and _on_simplex(w)
