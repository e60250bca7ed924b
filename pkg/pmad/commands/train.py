import argparse
import pandas as pd
import structlog
from ..checkpoint import save_checkpoint
from ..schemas import TrainMode
from ..training import train, train_per_dataset
from . import add_common_arguments, add_training_arguments, require_corpus, require_out, resolve

logger = structlog.get_logger()

MODEL_FILE = "model.pmad"
MODELS_DIR = "models"


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train one multi-domain model or one model per series")
    add_common_arguments(parser)
    add_training_arguments(parser)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    corpus = require_corpus(cfg)
    out = require_out(cfg)
    train_cfg = cfg.train_part()

    if cfg.mode == TrainMode.PER_DATASET:
        runs = train_per_dataset(corpus, train_cfg)
        for run_ in runs:
            save_checkpoint(run_.model, run_.domain_index, run_.config,
                            out / MODELS_DIR / f"{run_.series_id}.pmad")
        log = pd.concat([r.log.assign(series_id=r.series_id) for r in runs], ignore_index=True)
    else:
        runs = [train(corpus, train_cfg)]
        save_checkpoint(runs[0].model, runs[0].domain_index, runs[0].config, out / MODEL_FILE)
        log = runs[0].log

    sizes = [{"series_id": sid, "train_len": n} for r in runs for sid, n in r.train_sizes.items()]
    log.to_csv(out / "training_log.csv", index=False)
    pd.DataFrame(sizes, columns=["series_id", "train_len"]).to_csv(out / "train_sizes.csv", index=False)
    logger.info("Training artifacts written", out=str(out), n_checkpoints=len(runs))
    return 0
