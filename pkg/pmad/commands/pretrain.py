import argparse
import structlog
from ..checkpoint import save_checkpoint
from ..training import pretrain_encoder
from . import add_common_arguments, add_training_arguments, require_corpus, require_out, resolve

logger = structlog.get_logger()

ENCODER_FILE = "encoder.pmad"


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("pretrain", help="masked-reconstruction encoder pre-training")
    add_common_arguments(parser)
    add_training_arguments(parser)
    parser.add_argument("--mask-ratio", dest="pretrain_mask_ratio", type=float)
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    corpus = require_corpus(cfg)
    out = require_out(cfg)
    result = pretrain_encoder(corpus, cfg.train_part())
    save_checkpoint(result.model, result.domain_index, result.config, out / ENCODER_FILE)
    result.log.to_csv(out / "training_log.csv", index=False)
    return 0
