"""Logging for the lab: one stderr handler that cooperates with tqdm bars."""
import logging
import sys
from typing import Optional, TextIO

from tqdm import tqdm

from app.core.config import get_settings
from app.core.exceptions import raise_config_error

settings = get_settings()

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s:%(lineno)d | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
LEVEL_NAMES = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ProgressAwareHandler(logging.StreamHandler):
    """Writes records through ``tqdm.write`` so an active bar is redrawn below them."""

    def __init__(self, stream: Optional[TextIO] = None):
        super().__init__(stream or sys.stderr)

    def emit(self, record: logging.LogRecord) -> None:
        try:
            tqdm.write(self.format(record), file=self.stream)
            self.flush()
        except Exception:
            self.handleError(record)


def resolve_level(level: Optional[str]) -> int:
    """
    Numeric level for a level name; ``None`` means ``EGAD_LOG_LEVEL``.

    Raises:
        ConfigError: If the name is not a standard level.
    """
    name = (level or settings.LOG_LEVEL).upper()
    if name not in LEVEL_NAMES:
        raise_config_error("log_level", f"expected one of {', '.join(LEVEL_NAMES)}", level)
    return getattr(logging, name)


def setup_logging(
    level: Optional[str] = None,
    format_string: Optional[str] = None,
    stream: Optional[TextIO] = None,
) -> logging.Logger:
    """
    Configure the root logger and return it.

    Calling it again replaces the previous handler, so the CLI group can
    lower the level after ``main`` has set the default.

    Args:
        level: Level name; defaults to the EGAD_LOG_LEVEL setting.
        format_string: Custom format for log records.
        stream: Destination (stderr by default; stdout is reserved for
            `eval` summaries).
    """
    numeric = resolve_level(level)
    formatter = logging.Formatter(fmt=format_string or LOG_FORMAT, datefmt=DATE_FORMAT)

    root_logger = logging.getLogger()
    root_logger.setLevel(numeric)
    for handler in root_logger.handlers[:]:
        if isinstance(handler, ProgressAwareHandler):
            root_logger.removeHandler(handler)

    handler = ProgressAwareHandler(stream)
    handler.setLevel(numeric)
    handler.setFormatter(formatter)
    root_logger.addHandler(handler)
    return root_logger


def get_logger(name: str) -> logging.Logger:
    """Module logger (pass ``__name__``)."""
    return logging.getLogger(name)
