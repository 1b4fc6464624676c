import argparse
import logging
import sys
import traceback
from typing import List, Optional

import settings
from modules.errors import ConfigError, LabError, ReportFormatError
from modules.experiments import EXPERIMENTS, emit_plot_data, load_config, run

logging.basicConfig(
    level=getattr(logging, settings.LOG_LEVEL, logging.INFO),
    format="%(asctime)s %(levelname)s %(name)s: %(message)s",
)
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="genericity-lab",
        description="Shortest closed geodesics on T^2 under conformal perturbation, and argmin shrinking over polytopes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="Run one experiment from a config file")
    run_parser.add_argument("config", help="Path to a key = value config file")
    run_parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    run_parser.add_argument("--out", default=None, help="Report path (JSON lines)")
    run_parser.add_argument("--experiment", choices=EXPERIMENTS, default=None, help="Override the experiment id")
    run_parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                            help="Override a config key. Repeatable.")

    plot_parser = sub.add_parser("plot-data", help="Extract CSV tables from a report")
    plot_parser.add_argument("report", help="Path to a JSON-lines report")
    plot_parser.add_argument("--out", required=True, help="Output directory")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "run":
        try:
            config = load_config(args.config, args.override, seed=args.seed, out=args.out,
                                 experiment=args.experiment)
        except ConfigError as e:
            print(f"[error] {e}")
            return 2
        try:
            status, path = run(config)
        except LabError as e:
            logger.error(f"Experiment {config.experiment} aborted: {e}")
            traceback.print_exc()
            return 1
        print(f"[{config.experiment}] {'PASS' if status == 0 else 'FAIL'} -> {path}")
        return status

    try:
        written = emit_plot_data(args.report, args.out)
    except ReportFormatError as e:
        print(f"[error] {e}")
        return 2
    print(f"[plot-data] wrote {len(written)} files to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
