"""Experiment orchestration: config parsing, per-cell train/evaluate, report files.

A *cell* is one (agent, trading cost, reward function) combination. Every
cell draws its seeds from a hash of the master seed, the agent name, the cost
index and the run index, so cells are independent of each other and of the
order in which they execute.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import backtest
from .agents import ALGORITHMS, make_agent, make_config
from .baselines import BASELINES
from .env import EnvConfig, PortfolioEnv
from .errors import ValidationError
from .market_data import (
    GbmSpec,
    PriceSeries,
    RemoteProvider,
    fetch_remote,
    generate_gbm,
    load_csv,
    log_returns,
    train_test_split,
)

log = logging.getLogger(__name__)

REWARD_FUNCTIONS = ("log_return", "dsr")
AGGREGATES = ("mean", "peak")


# ---------------------------------------------------------------- config


def _strict(section: str, data: dict, allowed) -> dict:
    if not isinstance(data, dict):
        raise ValidationError(f"{section}: expected an object, got {type(data).__name__}")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ValidationError(f"{section}: unknown key(s) {sorted(unknown)}; allowed {sorted(allowed)}")
    return data


@dataclass(frozen=True)
class DataSource:
    """Where prices come from: ``gbm``, ``csv`` or ``tickers``."""

    kind: str = "gbm"
    path: Optional[str] = None
    tickers: tuple = ()
    start: Optional[str] = None
    end: Optional[str] = None
    url_template: Optional[str] = None
    cache_dir: str = ".alloc_rl_cache"
    offline: bool = False
    gbm: dict = field(default_factory=lambda: {
        "num_assets": 4, "num_days": 1000, "drift": 0.0003, "volatility": 0.01, "initial_price": 100.0, "seed": 0,
    })

    KEYS = ("kind", "path", "tickers", "start", "end", "url_template", "cache_dir", "offline", "gbm")
    GBM_KEYS = ("num_assets", "num_days", "drift", "volatility", "initial_price", "seed")

    @classmethod
    def from_dict(cls, d: dict) -> "DataSource":
        d = dict(_strict("data", d, cls.KEYS))
        kind = d.get("kind", "gbm")
        if kind not in ("gbm", "csv", "tickers"):
            raise ValidationError(f"data.kind must be gbm, csv or tickers, got {kind!r}")
        if kind == "csv" and not d.get("path"):
            raise ValidationError("data.path is required for kind 'csv'")
        if kind == "tickers":
            for key in ("tickers", "start", "end", "url_template"):
                if not d.get(key):
                    raise ValidationError(f"data.{key} is required for kind 'tickers'")
        if "gbm" in d:
            gbm = dict(cls().gbm)
            gbm.update(_strict("data.gbm", d["gbm"], cls.GBM_KEYS))
            d["gbm"] = gbm
        if "tickers" in d:
            d["tickers"] = tuple(d["tickers"])
        return cls(**d)

    def load(self) -> PriceSeries:
        if self.kind == "csv":
            return load_csv(self.path)
        if self.kind == "tickers":
            provider = RemoteProvider(self.url_template, Path(self.cache_dir), offline=self.offline)
            return fetch_remote(list(self.tickers), dt.date.fromisoformat(self.start),
                                dt.date.fromisoformat(self.end), provider)
        g = self.gbm
        return generate_gbm(GbmSpec(int(g["num_assets"]), int(g["num_days"]), g["drift"], g["volatility"],
                                    g["initial_price"], seed=int(g["seed"])))

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self).items()}


@dataclass(frozen=True)
class AgentSpec:
    algorithm: str
    overrides: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return ALGORITHMS[self.algorithm].name


# the runner sets these per cell
_ENV_PER_CELL = ("seed", "trading_cost_ratio", "use_log_return_reward", "random_start_range", "add_softmax")
_ENV_KEYS = tuple(f.name for f in dataclasses.fields(EnvConfig) if f.name not in _ENV_PER_CELL)


@dataclass(frozen=True)
class ExperimentConfig:
    data: DataSource = DataSource()
    train_fraction: float = 0.7
    env: dict = field(default_factory=dict)  # EnvConfig overrides; seed and cost are set per cell
    agents: tuple = ()
    baselines: tuple = ("uniform", "random", "buy_and_hold", "markowitz")
    training_timesteps: int = 10_000
    train_runs: int = 3
    test_runs: int = 100
    trading_costs: tuple = (0.0, 0.001, 0.01)
    reward_functions: tuple = REWARD_FUNCTIONS
    master_seed: int = 0
    output_dir: str = "runs/experiment"
    workers: int = 1

    KEYS = ("data", "train_fraction", "env", "agents", "baselines", "training_timesteps", "train_runs",
            "test_runs", "trading_costs", "reward_functions", "master_seed", "output_dir", "workers")

    def __post_init__(self):
        for name in ("training_timesteps", "train_runs", "test_runs", "workers"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValidationError("train_fraction must lie in (0, 1)")
        if not self.trading_costs:
            raise ValidationError("trading_costs must not be empty")
        for c in self.trading_costs:
            if not 0.0 <= c < 1.0:
                raise ValidationError(f"trading cost {c} outside [0, 1)")
        for r in self.reward_functions:
            if r not in REWARD_FUNCTIONS:
                raise ValidationError(f"unknown reward function {r!r}; choose from {list(REWARD_FUNCTIONS)}")
        for b in self.baselines:
            if b not in BASELINES:
                raise ValidationError(f"unknown baseline {b!r}; choose from {sorted(BASELINES)}")
        for a in self.agents:
            make_config(a.algorithm, a.overrides)  # raises on unknown algorithm or key
        names = [a.name for a in self.agents]
        if len(set(names)) != len(names):
            raise ValidationError("each algorithm may appear only once in agents")
        if not self.agents and not self.baselines:
            raise ValidationError("config lists no agents and no baselines")
        _strict("env", self.env, _ENV_KEYS)
        cfg = self.env_config(0.0, "log_return", 0)
        if cfg.episode_length < 2:
            raise ValidationError("env.episode_length must be >= 2 for the metrics")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(_strict("config", d, cls.KEYS))
        if "data" in d:
            d["data"] = DataSource.from_dict(d["data"])
        if "agents" in d:
            agents = []
            for i, a in enumerate(d["agents"]):
                if isinstance(a, str):
                    a = {"algorithm": a}
                a = _strict(f"agents[{i}]", a, ("algorithm", "overrides"))
                if "algorithm" not in a:
                    raise ValidationError(f"agents[{i}]: missing 'algorithm'")
                algo = str(a["algorithm"]).lower()
                if algo not in ALGORITHMS:
                    raise ValidationError(f"agents[{i}]: unknown algorithm {a['algorithm']!r}; "
                                          f"choose from {sorted(ALGORITHMS)}")
                agents.append(AgentSpec(algo, dict(a.get("overrides") or {})))
            d["agents"] = tuple(agents)
        for key in ("baselines", "trading_costs", "reward_functions"):
            if key in d:
                d[key] = tuple(d[key])
        if "trading_costs" in d:
            d["trading_costs"] = tuple(float(c) for c in d["trading_costs"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"config file {path} does not exist")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return {
            "data": self.data.to_dict(),
            "train_fraction": self.train_fraction,
            "env": dict(self.env),
            "agents": [{"algorithm": a.algorithm, "overrides": dict(a.overrides)} for a in self.agents],
            "baselines": list(self.baselines),
            "training_timesteps": self.training_timesteps,
            "train_runs": self.train_runs,
            "test_runs": self.test_runs,
            "trading_costs": list(self.trading_costs),
            "reward_functions": list(self.reward_functions),
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "workers": self.workers,
        }

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def env_config(self, cost: float, reward: str, seed: int) -> EnvConfig:
        return EnvConfig(**self.env).replace(
            trading_cost_ratio=float(cost), use_log_return_reward=(reward == "log_return"), seed=int(seed))


SCHEMA_HELP = """Experiment config (JSON object; unknown keys are rejected):
  data               {"kind": "gbm"|"csv"|"tickers", "path", "tickers", "start", "end",
                      "url_template", "cache_dir", "offline",
                      "gbm": {"num_assets", "num_days", "drift", "volatility", "initial_price", "seed"}}
  train_fraction     float in (0, 1), default 0.7
  env                environment overrides: %s
  agents             list of {"algorithm": %s, "overrides": {...}}
  baselines          subset of %s
  training_timesteps int >= 1, default 10000
  train_runs         int >= 1, default 3
  test_runs          int >= 1, default 100
  trading_costs      list of floats in [0, 1), default [0, 0.001, 0.01]
  reward_functions   subset of ["log_return", "dsr"]
  master_seed        int
  output_dir         path
  workers            int >= 1 (env ALLOC_RL_WORKERS overrides)
""" % (", ".join(_ENV_KEYS), "|".join(sorted(ALGORITHMS)), sorted(BASELINES))


# ---------------------------------------------------------------- seeds


def cell_seed(master_seed: int, agent: str, cost_index: int, run_index: int, stream: str = "train") -> int:
    key = f"{master_seed}|{agent}|{cost_index}|{run_index}|{stream}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:4], "little")


# ---------------------------------------------------------------- cells


@dataclass(frozen=True)
class Cell:
    agent: str  # display name
    key: str  # algorithm or baseline registry key
    is_baseline: bool
    cost_index: int
    cost: float
    reward: str
    overrides: dict = field(default_factory=dict)

    @property
    def slug(self) -> str:
        safe = self.agent.replace(" ", "_")
        return f"{safe}__cost{self.cost_index}__{self.reward}"


def build_cells(cfg: ExperimentConfig) -> list:
    cells = []
    for ci, cost in enumerate(cfg.trading_costs):
        for reward in cfg.reward_functions:
            for a in cfg.agents:
                cells.append(Cell(a.name, a.algorithm, False, ci, cost, reward, dict(a.overrides)))
            for b in cfg.baselines:
                cells.append(Cell(BASELINES[b].name, b, True, ci, cost, reward))
    return cells


def _start_range(n_returns: int, env_cfg: EnvConfig) -> int:
    """Widest random-start range that still fits a full episode."""
    return max(0, n_returns - env_cfg.lookback - env_cfg.episode_length)


def _env(returns: np.ndarray, cfg: ExperimentConfig, cell: Cell, seed: int, add_softmax: bool = True):
    env_cfg = cfg.env_config(cell.cost, cell.reward, seed)
    env_cfg = env_cfg.replace(random_start_range=_start_range(len(returns), env_cfg), add_softmax=add_softmax)
    if len(returns) < env_cfg.lookback + 1:
        raise ValidationError(f"{len(returns)} return rows cannot hold lookback {env_cfg.lookback} plus one step")
    return PortfolioEnv(returns, env_cfg)


def _evaluate_policy(policy, env: PortfolioEnv, episodes: int) -> tuple:
    """Deterministic test episodes; returns (metric rows, equity curves, weight paths)."""
    rows, curves, weights = [], [], []
    for _ in range(episodes):
        obs = env.reset()
        if hasattr(policy, "reset"):
            policy.reset()
        while not env.done:
            obs = env.step(policy.act(obs, explore=False)).observation
        curve = np.array(env.values)
        rows.append(backtest.compute_metrics(curve))
        curves.append(curve)
        weights.append(np.array(env.weight_history))
    return rows, curves, weights


class _FlatPolicy:
    """Adapts a trained agent to the window-shaped observation."""

    def __init__(self, agent):
        self.agent = agent

    def act(self, obs, explore=False):
        return self.agent.act(np.asarray(obs).reshape(-1), explore)


def _checkpoint_dir(cfg: ExperimentConfig, cell: Cell, run: int) -> Path:
    return Path(cfg.output_dir) / "checkpoints" / cell.slug / f"run{run}"


def run_cell(cfg: ExperimentConfig, cell: Cell, splits: tuple, phase: str = "all") -> dict:
    """Train and/or evaluate one cell. ``phase``: all | train | evaluate."""
    train_r, test_r = splits
    t0 = time.perf_counter()
    out = {"cell": dataclasses.asdict(cell), "seeds": [], "checkpoints": [], "rows": [], "curves": [], "weights": []}
    if cell.is_baseline:
        if phase == "train":
            out["seconds"] = time.perf_counter() - t0
            return out
        seed = cell_seed(cfg.master_seed, cell.agent, cell.cost_index, 0)
        env = _env(test_r, cfg, cell, cell_seed(cfg.master_seed, cell.agent, cell.cost_index, 0, "test"),
                   add_softmax=False)
        policy = BASELINES[cell.key](env.action_size, env.num_assets, seed=seed)
        rows, curves, weights = _evaluate_policy(policy, env, cfg.test_runs)
        out.update(seeds=[seed], rows=rows, curves=curves, weights=weights)
        out["seconds"] = time.perf_counter() - t0
        return out

    for run in range(cfg.train_runs):
        seed = cell_seed(cfg.master_seed, cell.agent, cell.cost_index, run)
        out["seeds"].append(seed)
        probe = _env(train_r, cfg, cell, seed)
        obs_dim = probe.obs_shape[0] * probe.obs_shape[1]
        agent = make_agent(cell.key, obs_dim, probe.action_size, cell.overrides, seed=seed)
        ckpt = _checkpoint_dir(cfg, cell, run)
        if phase in ("all", "train"):
            agent.train(probe, cfg.training_timesteps)
            agent.save(ckpt)
        else:
            if not (ckpt / "manifest.json").exists():
                raise ValidationError(f"no checkpoint at {ckpt}; run 'train' first")
            agent.load(ckpt)
        out["checkpoints"].append(str(ckpt))
        if phase == "train":
            continue
        env = _env(test_r, cfg, cell, cell_seed(cfg.master_seed, cell.agent, cell.cost_index, run, "test"))
        rows, curves, weights = _evaluate_policy(_FlatPolicy(agent), env, cfg.test_runs)
        out["rows"] += rows
        out["curves"] += curves
        out["weights"] += weights
    out["seconds"] = time.perf_counter() - t0
    return out


def _safe_cell(args) -> dict:
    cfg_dict, cell, splits, phase = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    try:
        return run_cell(cfg, cell, splits, phase)
    except Exception as exc:  # one broken cell must not sink the experiment
        log.exception("cell %s failed", cell.slug)
        return {"cell": dataclasses.asdict(cell), "error": f"{type(exc).__name__}: {exc}"}


# ---------------------------------------------------------------- reports


@dataclass
class RunManifest:
    config_hash: str
    cells: list
    artifacts: dict
    failures: list
    timings: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _mean_curve(curves: list) -> np.ndarray:
    n = min(len(c) for c in curves)
    return np.mean([c[:n] for c in curves], axis=0)


def _write_reports(cfg: ExperimentConfig, results: list, out_dir: Path) -> dict:
    metric_records, equity_rows, wmean_rows, wstd_rows = [], [], [], []
    for res in results:
        if "error" in res or not res.get("rows"):
            continue
        c = res["cell"]
        mean, peak = backtest.aggregate_runs(res["rows"])
        for agg, row in (("mean", mean), ("peak", peak)):
            metric_records.append({"agent": c["agent"], "cost": c["cost"], "reward": c["reward"],
                                   "aggregate": agg, "metrics": row})
        for step, v in enumerate(_mean_curve(res["curves"])):
            equity_rows.append((c["agent"], c["cost"], c["reward"], step, float(v)))
        wm, ws = backtest.weight_stats(res["weights"])
        wmean_rows.append((c["agent"], c["cost"], c["reward"], *map(float, wm)))
        wstd_rows.append((c["agent"], c["cost"], c["reward"], *map(float, ws)))
    width = max((len(r) - 3 for r in wmean_rows), default=0)
    wheader = ("agent", "cost", "reward", *(f"w{i}" for i in range(width)))
    paths = {
        "metrics": backtest.write_metrics_csv(out_dir / "metrics.csv", metric_records),
        "ranks": backtest.write_ranks_csv(out_dir / "ranks.csv", metric_records),
        "equity": backtest.write_csv(out_dir / "equity.csv", ("agent", "cost", "reward", "step", "mean_value"),
                                     equity_rows),
        "weights_mean": backtest.write_csv(out_dir / "weights_mean.csv", wheader, wmean_rows),
        "weights_std": backtest.write_csv(out_dir / "weights_std.csv", wheader, wstd_rows),
    }
    return {k: str(v) for k, v in paths.items()}


def _workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get("ALLOC_RL_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"ALLOC_RL_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValidationError("ALLOC_RL_WORKERS must be >= 1")
        return n
    return cfg.workers


def run_experiment(cfg: ExperimentConfig, phase: str = "all") -> RunManifest:
    """Train and/or evaluate every cell, then write reports under ``cfg.output_dir``."""
    if phase not in ("all", "train", "evaluate"):
        raise ValidationError(f"unknown phase {phase!r}")
    t0 = time.perf_counter()
    series = cfg.data.load()
    train_s, test_s = train_test_split(series, cfg.train_fraction)
    splits = (log_returns(train_s), log_returns(test_s))
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells = build_cells(cfg)
    jobs = [(cfg.to_dict(), cell, splits, phase) for cell in cells]
    workers = min(_workers(cfg), len(jobs)) if jobs else 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_safe_cell, jobs))
    else:
        results = [_safe_cell(j) for j in jobs]

    artifacts = {} if phase == "train" else _write_reports(cfg, results, out_dir)
    failures = [{"cell": r["cell"], "error": r["error"]} for r in results if "error" in r]
    manifest = RunManifest(
        config_hash=cfg.config_hash(),
        cells=[{"agent": r["cell"]["agent"], "cost": r["cell"]["cost"], "reward": r["cell"]["reward"],
                "seeds": r.get("seeds", []), "checkpoints": r.get("checkpoints", [])} for r in results],
        artifacts=artifacts,
        failures=failures,
        timings={"total_seconds": time.perf_counter() - t0,
                 "cells": {Cell(**r["cell"]).slug: r.get("seconds") for r in results}},
    )
    manifest_doc = {"config": cfg.to_dict(), "phase": phase, **manifest.to_dict()}
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest_doc, indent=2, sort_keys=True), encoding="utf-8")
    tmp.replace(out_dir / "manifest.json")
    for f in failures:
        log.warning("cell %s/%s/%s failed: %s", f["cell"]["agent"], f["cell"]["cost"], f["cell"]["reward"], f["error"])
    return manifest


def regenerate_ranks(run_dir) -> Path:
    """Recompute ranks.csv from a run directory's metrics.csv."""
    run_dir = Path(run_dir)
    metrics = run_dir / "metrics.csv"
    if not metrics.exists():
        raise ValidationError(f"{metrics} not found")
    return backtest.write_ranks_csv(run_dir / "ranks.csv", backtest.read_metrics_csv(metrics))


__all__ = [
    "AgentSpec", "Cell", "DataSource", "ExperimentConfig", "RunManifest", "SCHEMA_HELP", "build_cells",
    "cell_seed", "regenerate_ranks", "run_cell", "run_experiment",
]
