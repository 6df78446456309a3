"""Command router: assembles the subcommands under one click group."""
from typing import Optional

import click

from app.commands.ablate import ablate
from app.commands.analyze_entropy import analyze_entropy
from app.commands.distill import distill
from app.commands.evaluate import evaluate
from app.commands.gradcheck import gradcheck
from app.commands.sweep import sweep
from app.commands.train_teacher import train_teacher
from app.core.config import get_settings
from app.core.logging_config import LEVEL_NAMES, setup_logging

settings = get_settings()


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(settings.VERSION, prog_name=settings.PROJECT_NAME)
@click.option("--quiet", "-q", is_flag=True, default=False, help="Warnings only, no progress bars")
@click.option("--log-level", type=click.Choice(LEVEL_NAMES, case_sensitive=False), default=None,
              help="Log level (default: EGAD_LOG_LEVEL)")
@click.pass_context
def cli(ctx: click.Context, quiet: bool, log_level: Optional[str]) -> None:
    """Entropy-guided adaptive distillation lab."""
    setup_logging("WARNING" if quiet and log_level is None else log_level)
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet

# --- TRAINING ---
cli.add_command(train_teacher)
cli.add_command(distill)

# --- EVALUATION & ANALYSIS ---
cli.add_command(evaluate)
cli.add_command(analyze_entropy)
cli.add_command(gradcheck)

# --- EXPERIMENTS ---
cli.add_command(ablate)
cli.add_command(sweep)
