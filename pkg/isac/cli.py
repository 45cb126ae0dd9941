#!/usr/bin/env python3
"""
Command-line entry point: isac <kind> --config <file> [--trials K] [--seed S] [--out <csv>] [--plot <file>]
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from .beamform import InfeasibleError
from .config import KINDS, load_config
from .experiments import emit_csv, emit_plot_script, run_experiment

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def setup_logging(log_dir="logs"):
    """Console logging plus a file log under log_dir"""
    logging.basicConfig(
        level=logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s'
    )
    path = os.path.abspath(os.path.join(log_dir, "isac.log"))
    root = logging.getLogger()
    if any(getattr(h, "baseFilename", None) == path for h in root.handlers):
        return
    try:
        os.makedirs(log_dir, exist_ok=True)
        handler = logging.FileHandler(path)
        handler.setFormatter(logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s'))
        root.addHandler(handler)
    except OSError as e:
        logger.warning(f"File logging disabled: {e}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isac",
        description="IRS-assisted OTFS sensing and communication experiments",
    )
    parser.add_argument("kind", choices=KINDS, help="experiment to run")
    parser.add_argument("--config", help="JSON config file (defaults are used when omitted)")
    parser.add_argument("--trials", type=int, help="override the number of Monte Carlo trials")
    parser.add_argument("--seed", type=int, help="override the RNG seed")
    parser.add_argument("--out", help="output CSV path (default results/<kind>.csv)")
    parser.add_argument("--plot", help="also write a matplotlib script for the CSV to this path")
    return parser


def print_summary(table, kind: str, out_path: Path):
    """Console summary of the result table via rich"""
    console = Console()
    summary = Table(title=f"{kind} -> {out_path}")
    columns = [c for c in table.columns if c != "config_hash"]
    for column in columns:
        summary.add_column(column, justify="right")
    rows = table if len(table) <= 12 else table.tail(12)
    for _, row in rows.iterrows():
        summary.add_row(*[f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]) for c in columns])
    console.print(summary)
    if len(table) > 12:
        console.print(f"({len(table) - 12} earlier rows omitted)")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()

    try:
        config = load_config(args.config, kind=args.kind, trials=args.trials, seed=args.seed)
    except ValidationError as e:
        for error in e.errors():
            field = ".".join(str(part) for part in error["loc"]) or "config"
            logger.error(f"Invalid config field '{field}': {error['msg']}")
        return EXIT_CONFIG
    except (json.JSONDecodeError, FileNotFoundError, ValueError) as e:
        logger.error(f"Could not load config: {e}")
        return EXIT_CONFIG

    try:
        table = run_experiment(config)
        out_path = emit_csv(table, args.out or Path("results") / f"{config.kind}.csv")
        if args.plot:
            emit_plot_script(config.kind, out_path, args.plot)
    except InfeasibleError as e:
        logger.error(f"Infeasible optimization: {e}")
        return EXIT_INFEASIBLE
    except Exception as e:
        logger.error(f"{config.kind} failed: {str(e)}")
        logger.exception("Full traceback:")
        return EXIT_FAILURE

    print_summary(table, config.kind, out_path)
    logger.info(f"{config.kind} finished successfully")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
