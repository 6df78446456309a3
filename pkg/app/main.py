"""EGAD lab command-line entry point."""
# Standard library
import os
import sys
from typing import Optional, Sequence

# Local imports
from app.core.config import get_settings

settings = get_settings()

# BLAS reads these once when numpy loads, so they are set before any numpy import
THREAD_VARIABLES = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


def apply_thread_limit(threads: Optional[int]) -> None:
    """Cap BLAS / OpenMP parallelism; explicit environment values win."""
    if threads is None:
        return
    for name in THREAD_VARIABLES:
        os.environ.setdefault(name, str(threads))


apply_thread_limit(settings.THREADS)

import click  # noqa: E402

from app.commands.router import cli  # noqa: E402
from app.core.exception_handlers import EXIT_OK, handle_exception  # noqa: E402
from app.core.logging_config import setup_logging  # noqa: E402


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI and return its exit code (0 ok, 2 config, 3 ingestion, 4 dependency, 5 numerical)."""
    setup_logging()
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="egad", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted!", err=True)
        return 1
    except Exception as exc:
        return handle_exception(exc)
    # standalone_mode=False returns the exit code for --help / --version
    return result if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
