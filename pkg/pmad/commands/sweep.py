import argparse
from typing import List
import pandas as pd
import structlog
from ..config import settings
from ..exceptions import ConfigurationError, InvalidArgumentError
from ..grid import GridCell, results_frame, run_grid, summarize_seeds
from ..ingest import build_domain_index
from ..schemas import MemoryStrategy, TrainMode
from . import (
    add_common_arguments, add_training_arguments, parse_list, require_corpus, require_out, resolve, seeds_for,
)

logger = structlog.get_logger()


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="few-shot ratio and K sweep")
    add_common_arguments(parser)
    add_training_arguments(parser)
    parser.add_argument("--ratios", default="0.1,0.3,0.5,0.7,0.9")
    parser.add_argument("--k-values", dest="k_values", default="1,2,3")
    parser.add_argument("--strategies", default="data_driven,none")
    parser.add_argument("--seeds", help="comma-separated seeds; cells repeat per seed")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    corpus = require_corpus(cfg)
    out = require_out(cfg)
    ratios = parse_list(args.ratios, float)
    k_values = parse_list(args.k_values, int)
    strategies = [MemoryStrategy(s) for s in parse_list(args.strategies, str)]
    seeds = seeds_for(args, cfg)

    if any(not 0.0 < r <= 1.0 for r in ratios):
        raise InvalidArgumentError(f"ratios must lie in (0, 1]: {ratios}")
    # per-series models hold a single item unless n_items overrides it
    default_items = 1 if cfg.mode == TrainMode.PER_DATASET else len(build_domain_index(corpus))
    n_items = cfg.n_items or default_items
    too_large = [k for k in k_values if k > n_items]
    if too_large and any(s != MemoryStrategy.NONE for s in strategies):
        raise ConfigurationError(f"K values {too_large} exceed the number of memory items M={n_items}")

    cells: List[GridCell] = []
    base = cfg.train_part()
    for strategy in strategies:
        # K has no effect without memory, so one run per ratio is shared by every K row
        ks = [None] if strategy == MemoryStrategy.NONE else k_values
        for ratio in ratios:
            for k in ks:
                for seed in seeds:
                    config = base.model_copy(update={"memory_strategy": strategy, "train_ratio": ratio,
                                                     "k": k, "seed": seed})
                    labels = {"ratio": ratio, "k": k, "strategy": strategy.value}
                    cells.append(GridCell(f"{strategy.value} ratio={ratio} k={k}", config, labels))

    results = run_grid(cells, corpus, cfg.metric_part(), threads=settings.threads)
    frame = results_frame(results)
    rows = []
    for strategy in strategies:
        for ratio in ratios:
            for k in k_values:
                match = frame[(frame["strategy"] == strategy.value) & (frame["ratio"] == ratio)]
                if strategy != MemoryStrategy.NONE:
                    match = match[match["k"] == k]
                rows.append(match.assign(k=k))
    table = summarize_seeds(pd.concat(rows, ignore_index=True), ["ratio", "k", "strategy"])
    table = table[["ratio", "k", "strategy"] + [c for c in table.columns if c not in ("ratio", "k", "strategy")]]
    table.to_csv(out / "sweep.csv", index=False)
    logger.info("Sweep written", n_rows=len(table), out=str(out))
    return 0
