import argparse
import structlog
from ..bench import efficiency_report
from . import add_common_arguments, add_training_arguments, require_corpus, require_out, resolve

logger = structlog.get_logger()


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("bench", help="training, context-switching, inference and size accounting")
    add_common_arguments(parser)
    add_training_arguments(parser)
    parser.add_argument("--keep-checkpoints", dest="keep_checkpoints", action="store_true",
                        help="write the measured checkpoints under <out>/checkpoints")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    corpus = require_corpus(cfg)
    out = require_out(cfg)
    workdir = out / "checkpoints" if args.keep_checkpoints else None
    table = efficiency_report(corpus, cfg.train_part(), workdir=workdir)
    table.to_csv(out / "efficiency.csv", index=False)
    logger.info("Efficiency table written", out=str(out))
    return 0
