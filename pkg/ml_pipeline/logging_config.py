import logging
import sys

import structlog

_DEFAULT_FORMAT = "%(message)s"


def configure_logging(level: str = "INFO", renderer: str = "console") -> None:
    """
    Configure structlog on top of the stdlib logging module.

    Args:
        level (str): Log level name (DEBUG, INFO, WARNING, ...)
        renderer (str): 'console' for human-readable lines, 'json' for one JSON
            object per event
    """
    numeric_level = getattr(logging, level.upper(), logging.INFO)
    logging.basicConfig(
        level=numeric_level,
        format=_DEFAULT_FORMAT,
        stream=sys.stderr,
        force=True,
    )

    final_processor = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if renderer == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.format_exc_info,
            final_processor,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
