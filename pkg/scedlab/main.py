import sys
from typing import List, Optional

import structlog

from scedlab import __version__
from scedlab.cli import COMMAND_MODULES
from scedlab.cli.common import CLIArgumentParser
from scedlab.core.config import get_settings
from scedlab.core.exceptions import EXIT_IO, EXIT_NUMERICAL, EXIT_USAGE, SCEDError
from scedlab.core.logging import setup_logging
from scedlab.core.metrics import export_metrics

logger = structlog.get_logger(__name__)


def create_parser() -> CLIArgumentParser:
    parser = CLIArgumentParser(
        prog="scedlab",
        description="Subcode ensemble decoding: ensemble construction, verification and FER campaigns",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", dest="log_level", help="overrides SCED_LOG_LEVEL")
    parser.add_argument("--metrics-file", dest="metrics_file", help="write Prometheus metrics here on exit")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=CLIArgumentParser)
    subparsers.required = True
    for module in COMMAND_MODULES:
        module.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = create_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.log_level, json=settings.log_json)
    logger.info("Starting scedlab", command=args.command, version=__version__)

    try:
        return args.handler(args, settings)
    except SCEDError as exc:
        logger.error("Command failed", command=args.command, error=str(exc), kind=type(exc).__name__)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        logger.error("I/O failure", command=args.command, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, FloatingPointError) as exc:
        logger.error("Numerical failure", command=args.command, exc_info=exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KeyboardInterrupt:
        logger.warning("Interrupted", command=args.command)
        return EXIT_USAGE
    finally:
        export_metrics(args.metrics_file or settings.metrics_file)


if __name__ == "__main__":
    sys.exit(main())
