"""Price data: CSV I/O, remote download with local cache, GBM synthesis, splits."""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import math
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateSplit,
    EmptyUniverse,
    InvalidSpec,
    NetworkError,
    NonPositivePrice,
    ParseError,
    ProviderFormatError,
    TooFewRows,
)


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple
    tickers: tuple
    prices: np.ndarray

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=np.float64)
        if prices.ndim != 2:
            raise ParseError(f"prices must be 2-D, got shape {prices.shape}")
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "tickers", tuple(self.tickers))
        if prices.shape[1] != len(self.tickers):
            raise ParseError(
                f"{len(self.tickers)} tickers but {prices.shape[1]} price columns"
            )
        if prices.shape[0] != len(self.dates):
            raise ParseError(f"{len(self.dates)} dates but {prices.shape[0]} rows")
        if not np.all(np.isfinite(prices)):
            r, c = np.argwhere(~np.isfinite(prices))[0]
            raise ParseError(f"missing or non-finite price at row {r}, column {self.tickers[c]!r}")
        if np.any(prices <= 0):
            r, c = np.argwhere(prices <= 0)[0]
            raise NonPositivePrice(
                f"non-positive price {prices[r, c]} at row {r}, column {self.tickers[c]!r}"
            )
        for i in range(1, len(self.dates)):
            if not self.dates[i] > self.dates[i - 1]:
                raise ParseError(
                    f"dates not strictly increasing at row {i}: {self.dates[i - 1]} -> {self.dates[i]}"
                )
        prices.setflags(write=False)
        object.__setattr__(self, "prices", prices)

    @property
    def num_days(self) -> int:
        return self.prices.shape[0]

    @property
    def num_assets(self) -> int:
        return self.prices.shape[1]

    def slice(self, start: int, stop: int) -> "PriceSeries":
        return PriceSeries(self.dates[start:stop], self.tickers, self.prices[start:stop])


@dataclass(frozen=True)
class GbmSpec:
    num_assets: int
    num_days: int
    drift: Sequence[float]
    volatility: Sequence[float]
    initial_price: Sequence[float]
    seed: int = 0
    start_date: dt.date = dt.date(2000, 1, 3)


# ---------------------------------------------------------------- CSV


def _parse_date(text: str, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip()[:10])
    except ValueError:
        raise ParseError(f"row {row}: cannot parse date {text!r}") from None


def parse_csv_text(text: str, source: str = "<string>") -> PriceSeries:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{source}: empty file") from None
    if len(header) < 2:
        raise ParseError(f"{source}: header needs a date column and at least one ticker")
    tickers = [h.strip() for h in header[1:]]
    dates, rows = [], []
    for lineno, rec in enumerate(reader, start=2):
        if not rec or all(not x.strip() for x in rec):
            continue
        if len(rec) != len(header):
            raise ParseError(f"{source}: line {lineno} has {len(rec)} fields, expected {len(header)}")
        dates.append(_parse_date(rec[0], lineno))
        vals = []
        for col, cell in zip(tickers, rec[1:]):
            cell = cell.strip()
            if cell == "":
                raise ParseError(f"{source}: line {lineno}, column {col!r}: missing price")
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{source}: line {lineno}, column {col!r}: not a number {cell!r}") from None
            if not v > 0:
                raise NonPositivePrice(f"{source}: line {lineno}, column {col!r}: non-positive price {cell}")
            vals.append(v)
        rows.append(vals)
    prices = np.array(rows, dtype=np.float64).reshape(len(rows), len(tickers))
    return PriceSeries(dates, tickers, prices)


def load_csv(path) -> PriceSeries:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such price file: {path}")
    return parse_csv_text(path.read_text(encoding="utf-8"), source=str(path))


def save_csv(series: PriceSeries, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", *series.tickers])
    for d, row in zip(series.dates, series.prices):
        w.writerow([d.isoformat(), *(repr(float(x)) for x in row)])
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


# ---------------------------------------------------------------- remote


def _urllib_fetch(url: str, timeout: float) -> str:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read().decode("utf-8")
    except (urllib.error.URLError, OSError) as exc:
        raise NetworkError(f"request to {url} failed: {exc}") from exc


@dataclass
class RemoteProvider:
    """HTTPS endpoint returning ``date,<ticker>...`` CSV.

    ``url_template`` is formatted with ``tickers`` (comma-joined), ``start``
    and ``end`` (ISO dates). ``fetcher`` maps a URL to the response body and
    exists so tests can stub the transport.
    """

    url_template: str
    cache_dir: Path = Path(".alloc_rl_cache")
    timeout: float = 30.0
    offline: bool = False
    fetcher: Optional[Callable[[str, float], str]] = None
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def cache_path(self, tickers: Sequence[str], start: dt.date, end: dt.date) -> Path:
        key = f"{self.url_template}|{','.join(tickers)}|{start.isoformat()}|{end.isoformat()}"
        digest = hashlib.sha256(key.encode()).hexdigest()[:16]
        return Path(self.cache_dir) / f"prices_{digest}.csv"


def fetch_remote(tickers: Sequence[str], start: dt.date, end: dt.date, provider: RemoteProvider) -> PriceSeries:
    tickers = [t.strip() for t in tickers]
    if not tickers:
        raise EmptyUniverse("ticker list is empty")
    cached = provider.cache_path(tickers, start, end)
    if cached.exists():
        return load_csv(cached)
    if provider.offline:
        raise NetworkError(f"offline and no cache at {cached}")
    url = provider.url_template.format(tickers=",".join(tickers), start=start.isoformat(), end=end.isoformat())
    fetch = provider.fetcher or _urllib_fetch
    with provider._lock:
        body = fetch(url, provider.timeout)
    try:
        series = parse_csv_text(body, source=url)
    except ParseError as exc:
        raise ProviderFormatError(f"malformed provider response: {exc}") from exc
    missing = [t for t in tickers if t not in series.tickers]
    if missing:
        raise ProviderFormatError(f"provider returned no column for ticker(s): {', '.join(missing)}")
    cols = [series.tickers.index(t) for t in tickers]
    series = PriceSeries(series.dates, tickers, series.prices[:, cols])
    # write-through: the cached file goes through the same validation path on reload
    save_csv(series, cached)
    return load_csv(cached)


# ---------------------------------------------------------------- synthetic


def generate_gbm(spec: GbmSpec) -> PriceSeries:
    m, n = spec.num_assets, spec.num_days
    if m < 1 or n < 1:
        raise InvalidSpec("num_assets and num_days must be >= 1")
    drift = np.broadcast_to(np.asarray(spec.drift, dtype=np.float64), (m,))
    vol = np.broadcast_to(np.asarray(spec.volatility, dtype=np.float64), (m,))
    p0 = np.broadcast_to(np.asarray(spec.initial_price, dtype=np.float64), (m,))
    if np.any(vol < 0) or not np.all(np.isfinite(vol)):
        raise InvalidSpec("volatility must be finite and >= 0")
    if np.any(p0 <= 0) or not np.all(np.isfinite(p0)):
        raise InvalidSpec("initial_price must be finite and > 0")
    if not np.all(np.isfinite(drift)):
        raise InvalidSpec("drift must be finite")
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((n - 1, m))
    steps = (drift - 0.5 * vol**2) + vol * z
    prices = np.empty((n, m))
    prices[0] = p0
    for t in range(n - 1):
        prices[t + 1] = prices[t] * np.exp(steps[t])
    dates = [spec.start_date + dt.timedelta(days=i) for i in range(n)]
    tickers = [f"A{i}" for i in range(m)]
    return PriceSeries(dates, tickers, prices)


# ---------------------------------------------------------------- transforms


def log_returns(series: PriceSeries) -> np.ndarray:
    """Per-asset log-returns, shape (num_days - 1, M)."""
    if series.num_days < 2:
        raise TooFewRows("need at least 2 rows to form a return")
    p = series.prices
    return np.log(p[1:] / p[:-1])


def train_test_split(series: PriceSeries, train_fraction: float):
    if not 0.0 < train_fraction < 1.0:
        raise DegenerateSplit(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = series.num_days
    if n < 2:
        raise TooFewRows("need at least 2 rows to split")
    # guard against 0.7 * 10 landing on 6.999999...
    k = math.floor(train_fraction * n + 1e-9)
    if k < 1 or k >= n:
        raise DegenerateSplit(f"split of {n} rows at fraction {train_fraction} leaves an empty half")
    return series.slice(0, k), series.slice(k, n)
