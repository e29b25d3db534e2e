"""Backtest metrics, run aggregation and cross-metric rank tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, EmptyRuns, ValidationError, ZeroVolatility

TRADING_DAYS = 252
METRICS = ("cumulative_return", "annualized_return", "sharpe", "calmar", "max_drawdown")
# +1: larger is better, -1: smaller is better
METRIC_DIRECTION = {
    "cumulative_return": 1,
    "annualized_return": 1,
    "sharpe": 1,
    "calmar": 1,
    "max_drawdown": -1,
}


@dataclass(frozen=True)
class MetricRow:
    cumulative_return: float
    annualized_return: float
    sharpe: float
    calmar: float
    max_drawdown: float

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f) for f in METRICS)


def _curve(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise ValidationError("equity curve must be a non-empty 1-D sequence")
    if np.any(v <= 0):
        raise ValidationError("equity curve values must be > 0")
    return v


def cumulative_return(curve) -> float:
    v = _curve(curve)
    return float((v[-1] - v[0]) / v[0])


def annualized_return(total_return: float, years: float) -> float:
    if total_return <= -1.0:
        raise DomainError(f"total return {total_return} <= -1 has no annualized value")
    if not years > 0:
        raise DomainError(f"years must be > 0, got {years}")
    return (1.0 + total_return) ** (1.0 / years) - 1.0


def sharpe_ratio(portfolio_return: float, risk_free: float, sigma: float) -> float:
    """(R_p - R_f) / sigma_p on already-annualized inputs."""
    if not sigma > 0:
        raise ZeroVolatility("portfolio volatility is zero")
    return (portfolio_return - risk_free) / sigma


def sharpe(returns, risk_free: float = 0.0, periods: int = TRADING_DAYS) -> float:
    """Annualized Sharpe of a per-step return series; ``risk_free`` is annual."""
    r = np.asarray(returns, dtype=np.float64)
    if r.size < 2:
        raise ValidationError("sharpe needs at least 2 returns")
    excess = r - risk_free / periods
    mean = float(excess.mean())
    sd = float(excess.std(ddof=1))
    if sd <= 1e-10 * abs(mean) + 1e-15:
        raise ZeroVolatility("per-step returns have zero dispersion")
    return sharpe_ratio(mean * periods, 0.0, sd * math.sqrt(periods))


def max_drawdown(curve) -> float:
    v = _curve(curve)
    peaks = np.maximum.accumulate(v)
    return float(np.max((peaks - v) / peaks))


def calmar(annual_return: float, risk_free: float, mdd: float) -> float:
    """(R_p - R_f) / MDD; a zero drawdown yields +inf (documented sentinel)."""
    if mdd < 0:
        raise DomainError("max drawdown is a magnitude and must be >= 0")
    if mdd == 0:
        return math.inf
    return (annual_return - risk_free) / mdd


def compute_metrics(curve, risk_free: float = 0.0, periods: int = TRADING_DAYS) -> MetricRow:
    """All five metrics for one equity curve.

    A zero-volatility curve reports a Sharpe of +/-inf by the sign of its mean
    excess return (0 when flat) instead of raising.
    """
    v = _curve(curve)
    if v.size < 2:
        raise ValidationError("equity curve needs at least 2 points")
    steps = v.size - 1
    cum = cumulative_return(v)
    ann = annualized_return(cum, steps / periods)
    rets = v[1:] / v[:-1] - 1.0
    try:
        sr = sharpe(rets, risk_free, periods) if rets.size >= 2 else 0.0
    except ZeroVolatility:
        edge = float(rets.mean()) - risk_free / periods
        sr = math.copysign(math.inf, edge) if abs(edge) > 1e-15 else 0.0
    mdd = max_drawdown(v)
    return MetricRow(cum, ann, sr, calmar(ann, risk_free, mdd), mdd)


def aggregate_runs(rows: Sequence[MetricRow]):
    """(mean row, peak row); peak is the run with the highest cumulative return."""
    rows = list(rows)
    if not rows:
        raise EmptyRuns("no runs to aggregate")
    arr = np.array([r.as_tuple() for r in rows], dtype=np.float64)
    with np.errstate(invalid="ignore"):
        mean = MetricRow(*(float(x) for x in arr.mean(axis=0)))
    peak = rows[int(np.argmax(arr[:, 0]))]
    return mean, peak


def competition_rank(values: Sequence[float], larger_is_better: bool = True) -> list:
    """1-based ranks where ties share the best rank (1, 2, 2, 4)."""
    vals = [(-v if larger_is_better else v) for v in values]
    return [1 + sum(1 for u in vals if u < x) for x in vals]


@dataclass(frozen=True)
class RankedRow:
    name: str
    metrics: MetricRow
    metric_ranks: tuple
    score: float
    score_rank: int  # competition rank of the score; ties share a rank
    rank: int  # position after tie-breaks, unique


def rank_table(rows: Iterable) -> list:
    """Rank named metric rows; best first.

    Per-metric competition ranks (max drawdown: smaller is better), score =
    mean of the five ranks, ties on score broken by cumulative return then name.
    """
    items = [(str(n), m) for n, m in (rows.items() if isinstance(rows, dict) else rows)]
    if len(items) < 2:
        raise ValidationError("rank_table needs at least two rows")
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise ValidationError("row names must be unique")
    per_metric = []
    for field in METRICS:
        col = [getattr(m, field) for _, m in items]
        per_metric.append(competition_rank(col, METRIC_DIRECTION[field] > 0))
    ranks = list(zip(*per_metric))
    scores = [sum(r) / len(r) for r in ranks]
    shared = competition_rank(scores, larger_is_better=False)
    order = sorted(range(len(items)), key=lambda i: (scores[i], -items[i][1].cumulative_return, names[i]))
    return [
        RankedRow(names[i], items[i][1], tuple(ranks[i]), scores[i], shared[i], pos + 1)
        for pos, i in enumerate(order)
    ]


# ---------------------------------------------------------------- CSV emitters


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    tmp.replace(path)
    return path


METRICS_HEADER = ("agent", "cost", "reward", "aggregate", *METRICS)


def write_metrics_csv(path, records: Iterable[dict]) -> Path:
    """``records``: dicts with agent, cost, reward, aggregate and a MetricRow under ``metrics``."""
    rows = []
    for r in records:
        m = r["metrics"]
        rows.append((r["agent"], r["cost"], r["reward"], r["aggregate"], *m.as_tuple()))
    return write_csv(path, METRICS_HEADER, rows)


def read_metrics_csv(path) -> list:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            out.append({
                "agent": rec["agent"],
                "cost": float(rec["cost"]),
                "reward": rec["reward"],
                "aggregate": rec["aggregate"],
                "metrics": MetricRow(*(float(rec[f]) for f in METRICS)),
            })
    return out


def write_ranks_csv(path, records: Iterable[dict]) -> Path:
    """One rank table per (cost, reward, aggregate) group of metrics records."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r["cost"], r["reward"], r["aggregate"]), []).append((r["agent"], r["metrics"]))
    rows = []
    for (cost, reward, agg), named in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        if len(named) < 2:
            continue
        for rr in rank_table(named):
            rows.append((cost, reward, agg, rr.name, rr.rank, rr.score_rank, rr.score, *rr.metric_ranks))
    header = ("cost", "reward", "aggregate", "agent", "rank", "score_rank", "score",
              *(f"rank_{m}" for m in METRICS))
    return write_csv(path, header, rows)


def weight_stats(weight_paths: Sequence[np.ndarray]) -> tuple:
    """Per-asset mean and std of portfolio weights pooled over all steps of all runs."""
    stacked = np.vstack([np.asarray(w) for w in weight_paths if len(w)])
    return stacked.mean(axis=0), stacked.std(axis=0)


__all__ = [
    "METRICS", "MetricRow", "RankedRow", "aggregate_runs", "annualized_return", "calmar",
    "competition_rank", "compute_metrics", "cumulative_return", "max_drawdown", "rank_table",
    "read_metrics_csv", "sharpe", "sharpe_ratio", "weight_stats", "write_csv",
    "write_metrics_csv", "write_ranks_csv",
]

