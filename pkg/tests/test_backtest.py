import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alloc_rl.backtest import (
    MetricRow,
    aggregate_runs,
    annualized_return,
    calmar,
    competition_rank,
    compute_metrics,
    cumulative_return,
    max_drawdown,
    rank_table,
    read_metrics_csv,
    sharpe,
    sharpe_ratio,
    weight_stats,
    write_metrics_csv,
    write_ranks_csv,
)
from alloc_rl.errors import DomainError, EmptyRuns, ValidationError, ZeroVolatility

# mean performance, no trading cost, log-return reward; drawdown as a fraction
REFERENCE_RESULTS = {
    "A2C": (1.61, 0.24, 0.92, 0.69, 0.34),
    "Buy And Hold": (1.48, 0.20, 0.82, 0.58, 0.34),
    "DDPG": (1.41, 0.17, 0.76, 0.52, 0.33),
    "MPT": (1.62, 0.25, 0.90, 0.66, 0.38),
    "NAF": (1.42, 0.17, 0.76, 0.50, 0.34),
    "PPO": (1.43, 0.18, 0.79, 0.54, 0.33),
    "REINFORCE": (1.37, 0.15, 0.69, 0.46, 0.33),
    "Random": (1.40, 0.17, 0.72, 0.47, 0.35),
    "SAC": (1.77, 0.30, 0.83, 0.68, 0.33),
    "TD3": (1.44, 0.18, 0.81, 0.55, 0.33),
    "TRPO": (1.59, 0.24, 0.94, 0.69, 0.34),
    "Uniform": (1.40, 0.17, 0.73, 0.48, 0.35),
}


def mdd_oracle(curve):
    worst = 0.0
    for i in range(len(curve)):
        for j in range(i + 1, len(curve)):
            worst = max(worst, (curve[i] - curve[j]) / curve[i])
    return worst


def test_cumulative_return_examples():
    assert cumulative_return([100, 150]) == 0.5
    assert cumulative_return([100, 100, 100]) == 0.0
    assert cumulative_return([100, 50]) == -0.5
    with pytest.raises(ValidationError):
        cumulative_return([100, 0])


def test_annualized_return_examples():
    assert annualized_return(0.21, 2) == pytest.approx(0.1, abs=1e-15)
    assert annualized_return(0.0, 7.3) == 0.0
    assert annualized_return(1.0, 4) == pytest.approx(2 ** 0.25 - 1, rel=1e-15)
    assert annualized_return(1.0, 4) == pytest.approx(0.18921, abs=1e-5)
    with pytest.raises(DomainError):
        annualized_return(-1.0, 1)
    with pytest.raises(DomainError):
        annualized_return(0.1, 0)


def test_sharpe_examples():
    assert sharpe_ratio(0.15, 0.05, 0.2) == pytest.approx(0.5)
    with pytest.raises(ZeroVolatility):
        sharpe([0.01] * 10)
    assert sharpe([0.02, -0.02] * 10) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ZeroVolatility):
        sharpe_ratio(0.1, 0.0, 0.0)


def test_sharpe_annualization():
    r = np.array([0.01, 0.03, -0.01, 0.02])
    expected = r.mean() * 252 / (r.std(ddof=1) * math.sqrt(252))
    assert sharpe(r) == pytest.approx(expected, rel=1e-12)


def test_max_drawdown_examples():
    assert max_drawdown([1, 2, 3, 4]) == 0.0
    assert max_drawdown([100, 120, 90, 110]) == pytest.approx(0.25)
    assert max_drawdown([100, 50, 200]) == pytest.approx(0.5)


def test_max_drawdown_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        curve = 100 * np.exp(np.cumsum(rng.normal(0, 0.05, n)))
        d = max_drawdown(curve)
        assert d == pytest.approx(mdd_oracle(curve), abs=1e-15)
        assert 0.0 <= d <= 1.0


def test_calmar_examples():
    assert calmar(0.15, 0.05, 0.25) == pytest.approx(0.4)
    assert calmar(0.05, 0.05, 0.3) == 0.0
    assert calmar(0.1, 0.0, 0.0) == math.inf
    with pytest.raises(DomainError):
        calmar(0.1, 0.0, -0.1)


@given(st.lists(st.floats(-0.1, 0.1), min_size=1, max_size=60))
def test_cumulative_matches_log_sum(lr):
    curve = np.exp(np.concatenate([[0.0], np.cumsum(lr)]))
    assert cumulative_return(curve) == pytest.approx(math.expm1(sum(lr)), abs=1e-9)


def test_compute_metrics_flat_and_rising():
    flat = compute_metrics([1.0, 1.0, 1.0])
    assert flat.sharpe == 0.0 and flat.max_drawdown == 0.0
    up = compute_metrics(1.01 ** np.arange(10))
    assert up.sharpe == math.inf and up.calmar == math.inf
    assert up.cumulative_return == pytest.approx(1.01 ** 9 - 1)


def test_aggregate_runs_examples():
    a = MetricRow(1.0, 0.1, 0.5, 0.2, 0.3)
    b = MetricRow(2.0, 0.3, 0.7, 0.4, 0.1)
    mean, peak = aggregate_runs([a])
    assert mean == peak == a
    mean, peak = aggregate_runs([a, b])
    assert peak == b
    assert mean.cumulative_return == pytest.approx(1.5)
    m2, _ = aggregate_runs([MetricRow(0.2, 0, 0, 0, 0), MetricRow(0.4, 0, 0, 0, 0)])
    assert m2.cumulative_return == pytest.approx(0.3)
    with pytest.raises(EmptyRuns):
        aggregate_runs([])


def test_competition_rank():
    assert competition_rank([3, 2, 2, 1]) == [1, 2, 2, 4]
    assert competition_rank([0.1, 0.3, 0.2], larger_is_better=False) == [1, 3, 2]


def test_rank_table_examples():
    rows = {"weak": MetricRow(0.1, 0.1, 0.1, 0.1, 0.5), "strong": MetricRow(0.9, 0.9, 0.9, 0.9, 0.1),
            "mid": MetricRow(0.5, 0.5, 0.5, 0.5, 0.3)}
    table = rank_table(rows)
    assert [r.name for r in table] == ["strong", "mid", "weak"]
    twin = MetricRow(0.5, 0.5, 0.5, 0.5, 0.3)
    table = rank_table([("b", twin), ("a", twin)])
    assert [r.name for r in table] == ["a", "b"]
    assert [r.score_rank for r in table] == [1, 1]
    with pytest.raises(ValidationError):
        rank_table([("a", twin)])
    with pytest.raises(ValidationError):
        rank_table([("a", twin), ("a", twin)])


def test_rank_table_reproduces_printed_extremes():
    table = rank_table({k: MetricRow(*v) for k, v in REFERENCE_RESULTS.items()})
    assert table[0].name == "SAC"
    assert table[-1].name == "Random"


@given(st.permutations(sorted(REFERENCE_RESULTS)))
def test_rank_table_permutation_invariant(order):
    base = [(r.name, r.rank, r.score) for r in rank_table({k: MetricRow(*REFERENCE_RESULTS[k]) for k in REFERENCE_RESULTS})]
    shuffled = [(r.name, r.rank, r.score) for r in rank_table([(k, MetricRow(*REFERENCE_RESULTS[k])) for k in order])]
    assert base == shuffled


@given(st.floats(0.01, 100.0), st.integers(0, 1000))
def test_scaling_curves_keeps_return_order(scale, seed):
    rng = np.random.default_rng(seed)
    curves = [100 * np.exp(np.cumsum(rng.normal(0, 0.02, 20))) for _ in range(4)]
    before = np.argsort([cumulative_return(c) for c in curves], kind="stable")
    after = np.argsort([cumulative_return(c * scale) for c in curves], kind="stable")
    np.testing.assert_array_equal(before, after)


def test_csv_round_trip(tmp_path):
    records = [
        {"agent": name, "cost": 0.0, "reward": "log_return", "aggregate": "mean", "metrics": MetricRow(*v)}
        for name, v in REFERENCE_RESULTS.items()
    ]
    path = write_metrics_csv(tmp_path / "metrics.csv", records)
    back = read_metrics_csv(path)
    assert [r["metrics"] for r in back] == [r["metrics"] for r in records]
    ranks = write_ranks_csv(tmp_path / "ranks.csv", back).read_text().splitlines()
    assert ranks[1].split(",")[3] == "SAC"
    assert ranks[-1].split(",")[3] == "Random"


def test_weight_stats():
    mean, std = weight_stats([np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.5, 0.5]])])
    np.testing.assert_allclose(mean, [0.5, 0.5])
    np.testing.assert_allclose(std, [np.std([1, 0, 0.5])] * 2)
