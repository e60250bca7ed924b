import argparse
from pathlib import Path
import structlog
from ..checkpoint import load_checkpoint
from ..evaluation import evaluate_models
from ..exceptions import CheckpointError
from ..metrics import report_to_frame
from . import add_common_arguments, require_corpus, require_out, resolve

logger = structlog.get_logger()


def add_parser(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="score a corpus with trained checkpoints")
    add_common_arguments(parser)
    parser.add_argument("--checkpoint", required=True,
                        help="a .pmad file, or a directory of per-series <series_id>.pmad files")
    parser.add_argument("--buffer-shape", dest="buffer_shape", choices=["linear", "sqrt"])
    parser.add_argument("--ell-max", dest="ell_max", type=int)
    parser.set_defaults(handler=run)


def _assignments(path: Path, corpus, expected):
    if path.is_file():
        ckpt = load_checkpoint(path, expected)
        return [(ckpt.model, ckpt.domain_index, corpus, ckpt.config)]
    if (path / "models").is_dir():
        path = path / "models"
    assignments = []
    for record in corpus:
        model_path = path / f"{record.series_id}.pmad"
        if not model_path.exists():
            raise CheckpointError(f"No checkpoint for series {record.series_id} in {path}")
        ckpt = load_checkpoint(model_path, expected)
        assignments.append((ckpt.model, ckpt.domain_index, [record], ckpt.config))
    return assignments


def run(args: argparse.Namespace) -> int:
    cfg = resolve(args)
    corpus = require_corpus(cfg)
    out = require_out(cfg)
    # model dimensions are only checked against an explicit config file
    expected = cfg.model_part() if args.config else None
    result = evaluate_models(_assignments(Path(args.checkpoint), corpus, expected), cfg.metric_part())

    report_to_frame(result.report).to_csv(out / "report.csv", index=False)
    result.scores.to_csv(out / "scores.csv", index=False)
    result.utilization.to_csv(out / "utilization.csv", index=False)
    logger.info("Evaluation artifacts written", out=str(out), corpus_auc_pr=result.report.corpus.auc_pr,
                n_undefined=result.report.n_undefined)
    return 0
