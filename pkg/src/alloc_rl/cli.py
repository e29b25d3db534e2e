"""Command-line entry point.

Exit codes: 0 success, 1 validation error (bad input, config or usage),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import sys
from pathlib import Path

from .errors import ValidationError
from .market_data import GbmSpec, RemoteProvider, fetch_remote, generate_gbm, save_csv
from .runner import SCHEMA_HELP, ExperimentConfig, regenerate_ranks, run_experiment

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="alloc-rl", description="Train and backtest portfolio-allocation agents.",
                epilog=SCHEMA_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    data = sub.add_parser("data", help="fetch or synthesize price data")
    dsub = data.add_subparsers(dest="data_command", required=True, parser_class=_Parser)
    synth = dsub.add_parser("synth", help="write a geometric-Brownian-motion price CSV")
    synth.add_argument("--assets", type=int, required=True)
    synth.add_argument("--days", type=int, required=True)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--drift", type=_floats, default=[0.0003], help="per-day drift, one value or one per asset")
    synth.add_argument("--vol", type=_floats, default=[0.01], help="per-day volatility")
    synth.add_argument("--price", type=_floats, default=[100.0], help="initial price")
    synth.add_argument("--out", required=True)
    fetch = dsub.add_parser("fetch", help="download prices from a CSV endpoint")
    fetch.add_argument("--tickers", required=True, help="comma-separated symbols")
    fetch.add_argument("--start", required=True, type=dt.date.fromisoformat)
    fetch.add_argument("--end", required=True, type=dt.date.fromisoformat)
    fetch.add_argument("--url-template", required=True,
                       help="URL with {tickers}, {start} and {end} placeholders")
    fetch.add_argument("--cache-dir", default=".alloc_rl_cache")
    fetch.add_argument("--offline", action="store_true")
    fetch.add_argument("--timeout", type=float, default=30.0)
    fetch.add_argument("--out", required=True)

    for name, help_text in (("train", "train agents and save checkpoints"),
                            ("evaluate", "evaluate saved checkpoints and baselines"),
                            ("run", "train then evaluate in one pass")):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int, help="override master_seed")
        sp.add_argument("--out", help="override output_dir")

    report = sub.add_parser("report", help="recompute ranks.csv from a run's metrics.csv")
    report.add_argument("--in", dest="run_dir", required=True)
    return p


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(master_seed=args.seed)
    if args.out is not None:
        cfg = cfg.replace(output_dir=args.out)
    return cfg


def _dispatch(args) -> None:
    if args.command == "data":
        if args.data_command == "synth":
            series = generate_gbm(GbmSpec(args.assets, args.days, args.drift, args.vol, args.price, seed=args.seed))
        else:
            provider = RemoteProvider(args.url_template, Path(args.cache_dir), args.timeout, args.offline)
            series = fetch_remote(args.tickers.split(","), args.start, args.end, provider)
        print(save_csv(series, args.out))
        return
    if args.command == "report":
        print(regenerate_ranks(args.run_dir))
        return
    cfg = _load_config(args)
    phase = {"train": "train", "evaluate": "evaluate", "run": "all"}[args.command]
    manifest = run_experiment(cfg, phase)
    print(json.dumps({"output_dir": cfg.output_dir, "artifacts": manifest.artifacts,
                      "failures": len(manifest.failures)}, indent=2))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}\n\n{SCHEMA_HELP}", file=sys.stderr)
        return EXIT_INVALID
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
