"""
A0C Command Line
Sub-commands: ``train`` runs seeded repetitions and writes CSV, checkpoints and
the resolved config; ``plot`` turns result CSVs into an SVG learning curve;
``selftest`` runs the bundled test suite.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from a0c import __version__
from a0c.config import format_config, parse_config, settings
from a0c.core.agent import run_experiment
from a0c.core.reporting import collect_records, emit_csv, emit_plot, quartile_summary, records_frame
from a0c.exceptions import A0CError, ConfigurationError
from a0c.utils.logger import logger, setup_logger


TESTS_DIR = Path(__file__).resolve().parent.parent / "tests"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="a0c",
        description=f"{settings.app_name} {settings.app_version}: tree search with learned continuous policies",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level (also DEBUG=true)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Run seeded training repetitions")
    train.add_argument("--config", type=Path, default=None, help="key = value configuration file")
    train.add_argument("--n-trace", type=int, default=None, help="Traces per search (overrides the file)")
    train.add_argument("--seed", type=int, default=None, help="Base seed (overrides the file)")
    train.add_argument("--out", type=Path, default=Path("runs"), help="Output directory")
    train.add_argument("--threads", type=int, default=None, help="Parallel repetitions, capped by A0C_THREADS (default: A0C_THREADS)")

    plot = commands.add_parser("plot", help="Draw learning curves from result CSVs")
    plot.add_argument("--in", dest="inputs", type=Path, nargs="+", required=True, help="Result CSV files")
    plot.add_argument("--out", type=Path, required=True, help="SVG output path")

    selftest = commands.add_parser("selftest", help="Run the oracle and invariant test suite")
    selftest.add_argument("--slow", action="store_true", help="Include the long learning-curve runs")

    return parser


def cmd_train(args: argparse.Namespace) -> int:
    config = parse_config(args.config, {"n_trace": args.n_trace, "seed": args.seed})
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(config))

    results = run_experiment(config, threads=args.threads, checkpoint_dir=out)
    records = collect_records(results)
    if not records:
        logger.error("No episode finished in any repetition; nothing to write")
        return 1

    emit_csv(records, out / f"a0c_ntrace{config.n_trace}_seed{config.seed}.csv")
    summary = quartile_summary(records_frame(records))
    for row in summary.itertuples(index=False):
        logger.info(
            f"rep {row.rep}: first quartile {row.first_quartile:.4f}, "
            f"final quartile {row.final_quartile:.4f}, improvement {row.improvement:+.4f}"
        )
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    emit_plot(args.inputs, args.out)
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    import pytest

    options = [str(TESTS_DIR), "-q"]
    if args.slow:
        options += ["-m", "slow or not slow"]
    return int(pytest.main(options))


COMMANDS = {
    "train": cmd_train,
    "plot": cmd_plot,
    "selftest": cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose or settings.debug:
        setup_logger(level="DEBUG")

    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        return 2
    except A0CError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
