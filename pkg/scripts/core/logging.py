"""
PidSqueeze logging setup.

Every handler writes to stderr or a file: stdout is reserved for CSV tables
and summaries. Defaults come from QS_LOG_LEVEL, QS_LOG_FILE and QS_LOG_DIR.
"""
import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

from scripts.core.config import LOG_DIR, LOG_FILE, LOG_LEVEL

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def _attach(logger: logging.Logger, handlers: list[logging.Handler], level: int) -> None:
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    for handler in handlers:
        logger.addHandler(handler)
    logger.setLevel(level)


def setup_logging(
    name: str,
    level: Optional[str] = None,
    log_file: Optional[str] = None,
    log_dir: Optional[Union[str, Path]] = None,
    console: bool = True,
    capture_warnings: bool = False,
) -> logging.Logger:
    """
    Configure a logger for a run.

    Calling it again for the same name replaces the previous handlers.

    Args:
        name: Logger name ("scripts" configures the whole package)
        level: Level name; defaults to QS_LOG_LEVEL
        log_file: File name inside log_dir; defaults to QS_LOG_FILE (none if unset)
        log_dir: Directory for log_file; defaults to QS_LOG_DIR
        console: Add a stderr handler
        capture_warnings: Route numpy/scipy RuntimeWarnings through the same handlers

    Returns:
        The configured logger
    """
    numeric_level = getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO)
    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    handlers: list[logging.Handler] = []
    if console:
        handlers.append(logging.StreamHandler(sys.stderr))
    log_file = log_file or LOG_FILE
    if log_file:
        directory = Path(log_dir or LOG_DIR)
        directory.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(directory / log_file, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(formatter)

    logger = logging.getLogger(name)
    _attach(logger, handlers, numeric_level)

    if capture_warnings:
        logging.captureWarnings(True)
        _attach(logging.getLogger("py.warnings"), list(handlers), logging.WARNING)

    return logger


def get_logger(name: str) -> logging.Logger:
    """Return the named logger, configuring it with the defaults if it has no handlers."""
    logger = logging.getLogger(name)
    return logger if logger.handlers else setup_logging(name)


@contextmanager
def LoggerContext(logger: logging.Logger, level: int) -> Iterator[logging.Logger]:
    """
    Temporarily change a logger's level, e.g. to silence integrator
    messages inside a parameter sweep.

    Examples:
        >>> with LoggerContext(logging.getLogger("scripts.filtering"), logging.WARNING):
        ...     sweep()
    """
    previous = logger.level
    logger.setLevel(level)
    try:
        yield logger
    finally:
        logger.setLevel(previous)
