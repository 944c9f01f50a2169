import argparse
import logging
import sys
from typing import List, Optional

from poissonbalance.api.commands import compare_command, solve_command, verify_command
from poissonbalance.config.settings import CONFIG_ENV_VAR, Settings, configure, settings
from poissonbalance.exceptions import InstanceFormatError, PoissonBalanceError
from poissonbalance.models.models import Algorithm, VerifySuite
from poissonbalance.utils.logging_config import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 1
EXIT_SOLVER = 2


def _default(name: str):
    return Settings.model_fields[name].default


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poissonbalance",
        description="Assign Poisson jobs to identical machines minimising the expected maximum load.",
    )
    parser.add_argument("--log-level", default=None,
                        help=f"Logging level (default: {_default('log_level')})")
    parser.add_argument("--log-file", default=None, help="Also log to this file, rotated at 10MB")
    parser.add_argument("--config", default=None,
                        help=f"JSON defaults document (default: ${CONFIG_ENV_VAR} when set)")
    commands = parser.add_subparsers(dest="command", required=True)

    solve = commands.add_parser("solve", help="Solve one instance and print the assignment document")
    solve.add_argument("--input", required=True, help="Instance document")
    solve.add_argument("--epsilon", type=float, required=True, help="Accuracy in (0, 1)")
    solve.add_argument("--algorithm", choices=[a.value for a in Algorithm], default=Algorithm.PTAS.value,
                       help=f"Algorithm to run (default: {Algorithm.PTAS.value})")
    solve.add_argument("--seed", type=int, default=None, help=f"Random seed (default: {_default('seed')})")
    solve.add_argument("--tail-tol", type=float, default=None,
                       help=f"Truncation tolerance of the expected-max series (default: {_default('tail_tol')})")
    solve.add_argument("--output", default=None, help="Write the document here instead of stdout")

    compare = commands.add_parser("compare", help="Run every algorithm on one instance and tabulate the results")
    compare.add_argument("--input", required=True, help="Instance document")
    compare.add_argument("--epsilon", type=float, required=True, help="Accuracy in (0, 1)")
    compare.add_argument("--seed", type=int, default=None,
                         help=f"Monte Carlo seed (default: {_default('seed')})")
    compare.add_argument("--csv", default=None, help="Also write the table as CSV")

    verify = commands.add_parser("verify", help="Run a verification battery")
    verify.add_argument("--suite", required=True, choices=[s.value for s in VerifySuite])
    verify.add_argument("--out", default=None, help="Write the report CSV here instead of stdout")
    return parser


def run(args: argparse.Namespace) -> int:
    if args.command == "solve":
        text = solve_command(args.input, args.epsilon, Algorithm(args.algorithm), args.output)
        if not args.output:
            sys.stdout.write(text + "\n")
        return EXIT_OK

    if args.command == "compare":
        sys.stdout.write(compare_command(args.input, args.epsilon, settings.seed, args.csv))
        return EXIT_OK

    result, text = verify_command(VerifySuite(args.suite), args.out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_SOLVER if result.failed else EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure(
            args.config,
            seed=getattr(args, "seed", None),
            tail_tol=getattr(args, "tail_tol", None),
            log_level=args.log_level,
            log_file=args.log_file,
        )
        setup_logging(settings.log_level, settings.log_file)
        return run(args)
    except InstanceFormatError as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_PARSE
    except PoissonBalanceError as e:
        logger.error(f"{args.command} failed: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_SOLVER
    except ValueError as e:
        logger.error(f"{args.command} rejected its input: {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
