"""Logging configuration for sr-granger.

Library modules log through :func:`get_logger`; only the CLI configures
handlers. Records go to stderr so that JSON and CSV results on stdout stay
machine-readable. Experiment workers re-run the configuration in each child
process with the parent's level.
"""

import logging
import sys
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, cast

import structlog

LOG_LEVELS = ("WARNING", "INFO", "DEBUG")


def configure_logging(
    log_level: str = "WARNING",
    log_file: Path | None = None,
    enable_json: bool = False,
) -> None:
    """Configure structured logging.

    Args:
        log_level: Log level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file that receives JSON lines in addition to stderr
        enable_json: Render stderr records as JSON instead of console text
    """
    level = getattr(logging, log_level.upper())
    strip_meta = structlog.stdlib.ProcessorFormatter.remove_processors_meta

    # force=True rebinds the handler to the current sys.stderr on every call
    stderr_handler = logging.StreamHandler(sys.stderr)
    logging.basicConfig(level=level, handlers=[stderr_handler], force=True)

    shared: list[Any] = [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="ISO"),
    ]
    if level <= logging.DEBUG:
        shared.append(
            structlog.processors.CallsiteParameterAdder(
                parameters=[structlog.processors.CallsiteParameter.FUNC_NAME]
            )
        )
    renderer: Any
    if enable_json:
        renderer = structlog.processors.JSONRenderer()
    else:
        renderer = structlog.dev.ConsoleRenderer(
            colors=sys.stderr.isatty(),
            exception_formatter=structlog.dev.rich_traceback,
        )

    structlog.configure(
        processors=[*shared, structlog.stdlib.ProcessorFormatter.wrap_for_formatter],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        logger_factory=structlog.stdlib.LoggerFactory(),
        context_class=dict,
        cache_logger_on_first_use=False,
    )
    stderr_handler.setFormatter(
        structlog.stdlib.ProcessorFormatter(processors=[strip_meta, renderer])
    )

    if log_file:
        log_file.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(
            structlog.stdlib.ProcessorFormatter(
                processors=[
                    strip_meta,
                    structlog.processors.format_exc_info,
                    structlog.processors.JSONRenderer(),
                ]
            )
        )
        logging.getLogger().addHandler(file_handler)


def get_logger(name: str) -> structlog.BoundLogger:
    """Get a configured logger for the given name."""
    return cast(structlog.BoundLogger, structlog.get_logger(name))


def current_level() -> str:
    """Name of the root logger's effective level."""
    return logging.getLevelName(logging.getLogger().getEffectiveLevel())


def worker_initializer(log_level: str) -> None:
    """Process-pool initializer: mirror the parent's level in a worker."""
    configure_logging(log_level=log_level)


@contextmanager
def bound_context(**values: Any) -> Iterator[None]:
    """Attach key-value pairs to every record logged inside the block."""
    with structlog.contextvars.bound_contextvars(**values):
        yield


def setup_cli_logging(
    verbose: int = 0, log_file: str | None = None, quiet: bool = False
) -> None:
    """Set up logging for CLI based on verbosity level.

    Args:
        verbose: Verbosity level (0=WARNING, 1=INFO, 2=DEBUG)
        log_file: Optional log file path
        quiet: Only report errors
    """
    log_level = "ERROR" if quiet else LOG_LEVELS[min(verbose, len(LOG_LEVELS) - 1)]
    configure_logging(log_level=log_level, log_file=Path(log_file) if log_file else None)
