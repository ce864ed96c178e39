# Squeezeclock ⏱️ AGPL-3.0 License

import argparse
import sys

from squeezeclock import __version__
from squeezeclock.report import REPORTS, report
from squeezeclock.selftest import selftest
from squeezeclock.simulate import simulate
from squeezeclock.utils.config_utils import SQUEEZECLOCK_CONFIG, parse_config

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_SELFTEST = 0, 1, 2, 3


def build_parser() -> argparse.ArgumentParser:
    """Command-line parser with simulate, report and selftest subcommands."""
    parser = argparse.ArgumentParser(prog="squeezeclock", description="Spin-squeezed fountain clock simulator")
    parser.add_argument("--version", action="version", version=f"squeezeclock {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a sequence and write a record file")
    sim.add_argument("--config", default=SQUEEZECLOCK_CONFIG, help="JSON config file (apparatus defaults when omitted)")
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--out", required=True, help="record file to write")
    sim.add_argument("--workers", type=int, default=None, help="threads for shot generation")
    sim.add_argument("--lenient", action="store_true", help="ignore unknown config keys")

    rep = sub.add_parser("report", help="build a CSV report from record files")
    rep.add_argument("--records", nargs="+", required=True, help="record file(s)")
    rep.add_argument("--report", required=True, choices=REPORTS, help="report name")
    rep.add_argument("--out", default=None, help="CSV output path")
    rep.add_argument("--confidence", type=float, default=None, help="confidence level of error bars")

    sub.add_parser("selftest", help="run the analytic oracle checks")
    return parser


def main(argv=None) -> int:
    """Entry point; returns 0 on success, 1 on validation errors, 2 on I/O errors and 3 on selftest failure."""
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = parse_config(args.config, strict=not args.lenient)
            if args.seed is not None:
                cfg = cfg.replace(seed=args.seed)
            simulate(cfg, args.out, workers=args.workers)
        elif args.command == "report":
            table = report(args.records, args.report, args.out, args.confidence)
            if args.out is None:
                sys.stdout.write(table.to_csv())
        elif not selftest():
            return EXIT_SELFTEST
    except (ValueError, RuntimeError) as e:
        print(f"❌ {e}")
        return EXIT_VALIDATION
    except OSError as e:
        print(f"❌ {e}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
