import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from alloc_rl.env import EnvConfig, PortfolioEnv
from alloc_rl.market_data import GbmSpec, generate_gbm

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


def rigged_prices(days: int = 600):
    """Asset 0 grows exactly 1% a day, asset 1 is flat."""
    return generate_gbm(GbmSpec(2, days, [math.log(1.01), 0.0], [0.0, 0.0], [1.0, 1.0], seed=0))


RIGGED_ENV = EnvConfig(episode_length=64, lookback=8, random_start_range=400, trading_cost_ratio=0.0)


@pytest.fixture
def rigged_env():
    return PortfolioEnv(rigged_prices(), RIGGED_ENV)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report: one line per criterion in the terminal summary
ACCEPTANCE: dict = {}


def record_criterion(name: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE[name] = (bool(passed), detail)
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (passed, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
