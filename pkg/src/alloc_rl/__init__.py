"""Reinforcement-learning and classical baselines for portfolio allocation."""

from .backtest import MetricRow, compute_metrics, rank_table
from .env import EnvConfig, PortfolioEnv
from .errors import AllocRLError, ValidationError
from .market_data import GbmSpec, PriceSeries, generate_gbm, load_csv, save_csv
from .runner import ExperimentConfig, run_experiment

__version__ = "0.1.0"

__all__ = [
    "AllocRLError", "EnvConfig", "ExperimentConfig", "GbmSpec", "MetricRow", "PortfolioEnv", "PriceSeries",
    "ValidationError", "compute_metrics", "generate_gbm", "load_csv", "rank_table", "run_experiment", "save_csv",
]
