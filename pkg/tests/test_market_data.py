import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from alloc_rl.errors import (
    DegenerateSplit,
    EmptyUniverse,
    InvalidSpec,
    NetworkError,
    NonPositivePrice,
    ParseError,
    ProviderFormatError,
    TooFewRows,
)
from alloc_rl.market_data import (
    GbmSpec,
    PriceSeries,
    RemoteProvider,
    fetch_remote,
    generate_gbm,
    load_csv,
    log_returns,
    parse_csv_text,
    save_csv,
    train_test_split,
)


def _series(prices, tickers=None):
    prices = np.asarray(prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    dates = [dt.date(2020, 1, 1) + dt.timedelta(days=i) for i in range(len(prices))]
    return PriceSeries(dates, tickers or [f"T{i}" for i in range(prices.shape[1])], prices)


def test_load_three_rows(tmp_path):
    p = tmp_path / "p.csv"
    p.write_text("date,A,B\n2020-01-01,1,1\n2020-01-02,2,2\n2020-01-03,4,4\n")
    s = load_csv(p)
    assert s.num_assets == 2 and s.num_days == 3
    assert tuple(s.tickers) == ("A", "B")
    np.testing.assert_array_equal(s.prices[:, 0], [1, 2, 4])


def test_zero_price_rejected():
    with pytest.raises(NonPositivePrice):
        parse_csv_text("date,A\n2020-01-01,1\n2020-01-02,0\n")


def test_shuffled_dates_rejected():
    with pytest.raises(ParseError):
        parse_csv_text("date,A\n2020-01-02,1\n2020-01-01,2\n")


def test_missing_value_and_bad_date():
    with pytest.raises(ParseError):
        parse_csv_text("date,A,B\n2020-01-01,1,\n")
    with pytest.raises(ParseError, match="row"):
        parse_csv_text("date,A\nnot-a-date,1\n")


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")


def test_csv_round_trip(tmp_path):
    s = generate_gbm(GbmSpec(3, 50, 0.001, 0.02, 100.0, seed=3))
    path = save_csv(s, tmp_path / "x.csv")
    back = load_csv(path)
    assert back.dates == s.dates and back.tickers == s.tickers
    np.testing.assert_array_equal(back.prices, s.prices)
    assert b"\r\n" not in path.read_bytes()


def _stub(payload, calls=None):
    def fetch(url, timeout):
        if calls is not None:
            calls.append(url)
        return payload
    return fetch


PAYLOAD = "date,AAA,BBB\n2020-01-01,10,20\n2020-01-02,11,19\n2020-01-03,12,21\n"


def test_fetch_remote_stub_and_cache(tmp_path):
    calls = []
    prov = RemoteProvider("https://example.invalid/{tickers}/{start}/{end}", tmp_path, fetcher=_stub(PAYLOAD, calls))
    s = fetch_remote(["AAA", "BBB"], dt.date(2020, 1, 1), dt.date(2020, 1, 3), prov)
    assert s.num_assets == 2 and len(calls) == 1
    offline = RemoteProvider(prov.url_template, tmp_path, offline=True, fetcher=_stub("garbage"))
    again = fetch_remote(["AAA", "BBB"], dt.date(2020, 1, 1), dt.date(2020, 1, 3), offline)
    np.testing.assert_array_equal(again.prices, s.prices)
    assert again.dates == s.dates


def test_fetch_remote_errors(tmp_path):
    prov = RemoteProvider("u/{tickers}/{start}/{end}", tmp_path, fetcher=_stub(PAYLOAD))
    with pytest.raises(ProviderFormatError, match="CCC"):
        fetch_remote(["AAA", "CCC"], dt.date(2020, 1, 1), dt.date(2020, 1, 3), prov)
    with pytest.raises(EmptyUniverse):
        fetch_remote([], dt.date(2020, 1, 1), dt.date(2020, 1, 3), prov)
    off = RemoteProvider("u/{tickers}/{start}/{end}", tmp_path / "empty", offline=True)
    with pytest.raises(NetworkError):
        fetch_remote(["AAA"], dt.date(2020, 1, 1), dt.date(2020, 1, 3), off)


def test_gbm_degenerate_and_deterministic():
    flat = generate_gbm(GbmSpec(2, 20, 0.0, 0.0, 5.0, seed=1))
    assert np.all(flat.prices == 5.0)
    a = generate_gbm(GbmSpec(3, 40, 0.001, 0.02, 1.0, seed=9))
    b = generate_gbm(GbmSpec(3, 40, 0.001, 0.02, 1.0, seed=9))
    assert a.prices.tobytes() == b.prices.tobytes()


def test_gbm_exact_growth():
    s = generate_gbm(GbmSpec(1, 30, math.log(1.01), 0.0, 1.0))
    np.testing.assert_allclose(s.prices[1:, 0] / s.prices[:-1, 0], 1.01, rtol=1e-13)


def test_gbm_invalid_spec():
    with pytest.raises(InvalidSpec):
        generate_gbm(GbmSpec(2, 10, 0.0, -0.1, 1.0))
    with pytest.raises(InvalidSpec):
        generate_gbm(GbmSpec(2, 10, 0.0, 0.1, 0.0))


def test_log_returns_examples():
    np.testing.assert_allclose(log_returns(_series([1, 2, 4]))[:, 0], [math.log(2)] * 2)
    assert np.all(log_returns(_series([3, 3, 3])) == 0)
    np.testing.assert_allclose(log_returns(_series([100, 100 * math.exp(0.03)]))[0, 0], 0.03, rtol=1e-12)
    with pytest.raises(TooFewRows):
        log_returns(_series([1.0]))


def test_split_examples():
    tr, te = train_test_split(_series(np.arange(1, 11)), 0.7)
    assert tr.num_days == 7 and te.num_days == 3
    tr, te = train_test_split(_series([1, 2]), 0.5)
    assert tr.num_days == te.num_days == 1
    with pytest.raises(DegenerateSplit):
        train_test_split(_series([1, 2, 3]), 0.01)


@given(st.integers(2, 60), st.floats(0.05, 0.95), st.integers(0, 10_000))
def test_split_concatenates_to_original(n, frac, seed):
    s = generate_gbm(GbmSpec(2, n, 0.0, 0.01, 1.0, seed=seed))
    try:
        tr, te = train_test_split(s, frac)
    except DegenerateSplit:
        return
    assert tr.dates + te.dates == s.dates
    np.testing.assert_array_equal(np.vstack([tr.prices, te.prices]), s.prices)


@given(st.integers(0, 10_000), st.integers(2, 80))
def test_log_return_round_trip(seed, n):
    s = generate_gbm(GbmSpec(3, n, 0.0005, 0.03, [1.0, 50.0, 200.0], seed=seed))
    r = log_returns(s)
    rebuilt = s.prices[0] * np.exp(np.vstack([np.zeros(3), np.cumsum(r, axis=0)]))
    np.testing.assert_allclose(rebuilt, s.prices, rtol=1e-12)
