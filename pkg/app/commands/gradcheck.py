"""gradcheck: finite-difference validation of the autodiff engine."""
import click

from app.commands.common import RunContext, run_options, write_json
from app.core.exceptions import GradcheckFailure
from app.core.logging_config import get_logger
from app.services.gradcheck_service import FD_STEP, GradcheckService

logger = get_logger(__name__)


@click.command("gradcheck")
@click.option("--cases", type=click.IntRange(min=1), default=5, show_default=True,
              help="Random cases per primitive")
@click.option("--step", type=click.FloatRange(min=0.0, min_open=True), default=FD_STEP, show_default=True,
              help="Central-difference step")
@click.option("--skip-objective", is_flag=True, default=False, help="Skip the full per-step objective check")
@run_options
def gradcheck(run: RunContext, cases: int, step: float, skip_objective: bool) -> None:
    """
    Check every primitive and loss gradient against central differences.

    Writes gradcheck_report.json and prints one line per entry. Exits
    non-zero when any entry exceeds its tolerance.
    """
    service = GradcheckService(seed=run.config.train.seed, cases=cases, step=step)
    report = service.run(include_objective=not skip_objective)
    write_json(run.out / "gradcheck_report.json", {**report.model_dump(), "passed": report.passed})

    width = max(len(entry.name) for entry in report.entries)
    for entry in report.entries:
        status = "ok" if entry.passed else "FAIL"
        click.echo(f"{entry.name:<{width}}  {entry.max_rel_error:.3e}  (tol {entry.tolerance:.0e})  {status}")

    if not report.passed:
        raise GradcheckFailure(
            message=f"{len(report.failures)} gradient check(s) failed",
            details={"failures": report.failures}
        )
