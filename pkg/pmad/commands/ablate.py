import argparse
from pathlib import Path
from typing import List, Optional, Sequence, Tuple
import pandas as pd
import structlog
from ..checkpoint import save_checkpoint
from ..config import settings
from ..exceptions import ConfigurationError, InvalidArgumentError
from ..grid import GridCell, results_frame, run_grid, summarize_seeds
from ..metrics import domain_table
from ..schemas import MemoryStrategy, RunConfig
from ..training import pretrain_encoder
from . import add_common_arguments, add_training_arguments, require_corpus, require_out, resolve, seeds_for

logger = structlog.get_logger()

SCRATCH = "scratch"
PRETRAINED = "pretrained"

# named rows of the two standard grids; a None init keeps the configured encoder_init
PRESETS = {
    "table3": [
        ("scratch, w/o memory", SCRATCH, MemoryStrategy.NONE),
        ("scratch, with memory", SCRATCH, MemoryStrategy.DATA_DRIVEN),
        ("pre-trained, w/o memory", PRETRAINED, MemoryStrategy.NONE),
        ("pre-trained, with memory", PRETRAINED, MemoryStrategy.DATA_DRIVEN),
    ],
    "table4": [
        ("No update", None, MemoryStrategy.FROZEN),
        ("Own-domain update", None, MemoryStrategy.OWN_DOMAIN),
        ("Data-driven update", None, MemoryStrategy.DATA_DRIVEN),
    ],
}

Variant = Tuple[str, Optional[str], MemoryStrategy]


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("ablate", help="encoder-init x memory-strategy grids")
    add_common_arguments(parser)
    add_training_arguments(parser)
    parser.add_argument("--grid", default="table3",
                        help="table3, table4, or comma-separated init:strategy pairs "
                             "(init in scratch|pretrained), e.g. pretrained:own_domain,scratch:frozen")
    parser.add_argument("--pretrained", help="encoder checkpoint for the pre-trained rows")
    parser.add_argument("--seeds", help="comma-separated seeds; cells repeat per seed")
    parser.set_defaults(handler=run)


def parse_grid(text: str) -> List[Variant]:
    if text in PRESETS:
        return PRESETS[text]
    variants: List[Variant] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        init, sep, strategy = part.partition(":")
        if not sep or init not in (SCRATCH, PRETRAINED):
            raise InvalidArgumentError(f"Grid entry '{part}' is not init:strategy with init in scratch|pretrained")
        try:
            strategy = MemoryStrategy(strategy)
        except ValueError:
            raise InvalidArgumentError(f"Unknown memory strategy '{strategy}' in grid entry '{part}'")
        variants.append((f"{init}, {strategy.value}", init, strategy))
    if not variants:
        raise InvalidArgumentError("Empty grid")
    names = [name for name, _, _ in variants]
    if len(set(names)) != len(names):
        raise InvalidArgumentError(f"Grid lists a combination twice: {text}")
    return variants


def build_cells(variants: Sequence[Variant], cfg: RunConfig, seeds, pretrained: Optional[str]) -> List[GridCell]:
    base = cfg.train_part()
    cells = []
    for name, init, strategy in variants:
        if init is None:
            encoder_init = base.encoder_init
        else:
            encoder_init = SCRATCH if init == SCRATCH else pretrained
        if encoder_init is None:
            raise ConfigurationError(f"Grid row '{name}' needs a pre-trained encoder")
        for seed in seeds:
            config = base.model_copy(update={"encoder_init": encoder_init, "memory_strategy": strategy,
                                             "seed": seed})
            labels = {"encoder_init": "scratch" if encoder_init == SCRATCH else "pre-trained",
                      "memory_strategy": strategy.value}
            cells.append(GridCell(name, config, labels))
    return cells


def run(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    variants = parse_grid(args.grid)
    corpus = require_corpus(cfg)
    out = require_out(cfg)
    seeds = seeds_for(args, cfg)

    pretrained = args.pretrained
    if not pretrained and any(init == PRETRAINED for _, init, _ in variants):
        encoder = pretrain_encoder(corpus, cfg.train_part())
        pretrained = str(save_checkpoint(encoder.model, encoder.domain_index, encoder.config,
                                         Path(out) / "encoder.pmad"))

    cells = build_cells(variants, cfg, seeds, pretrained)
    results = run_grid(cells, corpus, cfg.metric_part(), threads=settings.threads)

    table = summarize_seeds(results_frame(results), ["configuration", "encoder_init", "memory_strategy"])
    table.to_csv(out / "ablation.csv", index=False)

    # per-domain VUS-PR, averaged over seeds
    per_seed = []
    for seed in seeds:
        reports = {r.cell.name: r.report for r in results if r.cell.config.seed == seed}
        per_seed.append(domain_table(reports, "vus_pr"))
    domains = (pd.concat(per_seed).groupby(["dataset", "subdomain"], sort=False).mean()
               .round(2).reset_index())
    domains.to_csv(out / "domains_vus_pr.csv", index=False)
    logger.info("Ablation written", grid=args.grid, n_cells=len(cells), out=str(out))
    return 0
