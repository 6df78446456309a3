"""Exception handling for the command-line surface.

This module provides centralized exception handling that:
- Maps lab exceptions to their process exit codes
- Logs errors with their machine-readable code
- Prints a one-line JSON error record to stderr for scripts
"""
import json
import sys
from typing import Any, Dict, Optional, TextIO

import click

from app.core.exceptions import EGADException
from app.core.logging_config import get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1


def error_payload(exc: BaseException) -> Dict[str, Any]:
    """JSON-safe description of an exception."""
    if isinstance(exc, EGADException):
        return exc.to_dict()
    return {
        "error": True,
        "error_code": "INTERNAL_ERROR",
        "message": f"{type(exc).__name__}: {exc}",
    }


def handle_exception(exc: BaseException, stream: Optional[TextIO] = None) -> int:
    """Log an exception and return the exit code it maps to.

    Lab exceptions carry their own exit code; click usage errors keep
    click's; anything else exits 1 and is logged with a traceback.

    Args:
        exc: The exception that ended the command.
        stream: Where the JSON error record is written (stderr by default).

    Returns:
        Process exit code.
    """
    if isinstance(exc, EGADException):
        logger.error(f"[{exc.error_code}] {exc.message}")
        code = exc.exit_code
    elif isinstance(exc, click.ClickException):
        exc.show()
        return exc.exit_code
    else:
        logger.error(f"Unexpected error: {type(exc).__name__}: {exc}", exc_info=True)
        code = EXIT_UNEXPECTED

    (stream or sys.stderr).write(json.dumps(error_payload(exc), default=str) + "\n")
    return code
