import argparse
import pandas as pd
import structlog
from ..grid import summarize_seeds
from ..training import leave_one_out, loo_table
from . import add_common_arguments, add_training_arguments, require_corpus, require_out, resolve, seeds_for

logger = structlog.get_logger()


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("loo", help="zero-shot leave-one-domain-out evaluation")
    add_common_arguments(parser)
    add_training_arguments(parser)
    parser.add_argument("--compare-baseline", dest="compare_baseline", action="store_true",
                        help="also run the matched no-memory model on every fold")
    parser.add_argument("--seeds", help="comma-separated seeds; folds repeat per seed")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    corpus = require_corpus(cfg)
    out = require_out(cfg)
    seeds = seeds_for(args, cfg)

    frames = []
    for seed in seeds:
        folds = leave_one_out(corpus, cfg.train_part().model_copy(update={"seed": seed}),
                              cfg.metric_part(), compare_baseline=args.compare_baseline)
        frames.append(loo_table(folds).assign(seed=seed))
    table = summarize_seeds(pd.concat(frames, ignore_index=True), ["dataset", "subdomain", "strategy"])
    table.to_csv(out / "loo.csv", index=False)
    logger.info("Leave-one-out written", n_rows=len(table), out=str(out))
    return 0
