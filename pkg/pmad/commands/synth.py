import argparse
import structlog
from ..synth import default_suite, write_corpus

logger = structlog.get_logger()


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("synth", help="generate the synthetic multi-domain suite")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--out", required=True, help="output directory for the CSV files")
    parser.add_argument("--n-series", dest="n_series", type=int, default=4,
                        help="series per domain")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    records = default_suite(seed=args.seed, n_series=args.n_series)
    paths = write_corpus(records, args.out)
    logger.info("Synthetic corpus ready", out=args.out, n_files=len(paths))
    return 0
