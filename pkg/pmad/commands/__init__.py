"""One module per CLI verb; each exposes ``add_parser(subparsers)`` and ``run(args)``."""
import argparse
from pathlib import Path
from typing import Any, Dict, List, Sequence
import structlog
from ..config import resolve_run_config, write_resolved_config
from ..exceptions import ConfigurationError, InvalidArgumentError
from ..ingest import SeriesRecord, load_corpus
from ..schemas import RunConfig

logger = structlog.get_logger()


def add_common_arguments(parser: argparse.ArgumentParser, data: bool = True) -> None:
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    parser.add_argument("--seed", type=int)
    if data:
        parser.add_argument("--data", dest="data_dir", help="directory of series CSV files")


def add_training_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--mode", choices=["multi_domain", "per_dataset"])
    parser.add_argument("--strategy", dest="memory_strategy",
                        choices=["none", "frozen", "own_domain", "data_driven"])
    parser.add_argument("--ratio", dest="train_ratio", type=float)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--k", type=int)
    parser.add_argument("--n-items", dest="n_items", type=int)
    parser.add_argument("--encoder-init", dest="encoder_init")


def parse_list(text: str, cast=float) -> List[Any]:
    try:
        values = [cast(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InvalidArgumentError(f"Cannot parse list '{text}'")
    if not values:
        raise InvalidArgumentError("Empty list")
    return values


def resolve(args: argparse.Namespace, **extra) -> RunConfig:
    """Config file values overridden by any flag named after a config key."""
    overrides: Dict[str, Any] = {key: value for key, value in vars(args).items()
                                 if key in RunConfig.model_fields and value is not None}
    overrides.update({key: value for key, value in extra.items() if value is not None})
    return resolve_run_config(getattr(args, "config", None), overrides)


def require_out(cfg: RunConfig) -> Path:
    if not cfg.out_dir:
        raise ConfigurationError("An output directory is required (--out or out_dir)")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, str(out))
    return out


def require_corpus(cfg: RunConfig) -> List[SeriesRecord]:
    if not cfg.data_dir:
        raise ConfigurationError("A data directory is required (--data or data_dir)")
    return load_corpus(cfg.data_dir)


def seeds_for(args: argparse.Namespace, cfg: RunConfig) -> Sequence[int]:
    if getattr(args, "seeds", None):
        return parse_list(args.seeds, int)
    return [cfg.seed]
