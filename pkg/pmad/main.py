import argparse
import logging
import sys
from typing import Optional, Sequence
import structlog
import torch
from pydantic import ValidationError
from . import __version__
from .commands import ablate, bench, evaluate, loo, pretrain, sweep, synth, train
from .config import settings
from .exceptions import ConfigurationError, PmadError

COMMANDS = (synth, pretrain, train, evaluate, ablate, sweep, loo, bench)


def configure_logging(level: str = "INFO") -> None:
    logging.basicConfig(stream=sys.stderr, format="%(message)s", level=level.upper(), force=True)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer()
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


logger = structlog.get_logger()


class CommandParser(argparse.ArgumentParser):
    """Usage errors raise ConfigurationError instead of exiting with status 2."""

    def error(self, message: str):
        raise ConfigurationError(f"{self.prog}: {message}", usage=self.format_usage().strip())


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(
        prog="pmad",
        description="Patch-memory autoencoder for multi-domain time-series anomaly detection",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.add_parser(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Exit codes: 0 success, 1 user or configuration error, 2 runtime failure."""
    configure_logging(settings.log_level)
    try:
        args = build_parser().parse_args(argv)
    except ConfigurationError as e:
        logger.error("Invalid usage", error=e.message, **e.context)
        return e.exit_code
    torch.set_num_threads(settings.torch_threads)
    logger.info("Command started", command=args.command)
    try:
        code = args.handler(args) or 0
    except PmadError as e:
        logger.error("Command failed", command=args.command, error=e.message,
                     error_type=type(e).__name__, **e.context)
        return e.exit_code
    except ValidationError as e:
        logger.error("Invalid input", command=args.command, error=str(e))
        return 1
    except OSError as e:
        logger.error("I/O failure", command=args.command, error=str(e))
        return 2
    except Exception as e:
        logger.exception("Unhandled exception", command=args.command, error=str(e))
        return 2
    logger.info("Command finished", command=args.command)
    return code


if __name__ == "__main__":
    sys.exit(main())
