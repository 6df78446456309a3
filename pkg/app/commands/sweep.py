"""sweep: sensitivity of the EGAD run to one hyperparameter."""
from typing import List

import click

from app.commands.common import (
    RunContext,
    get_trainer_service,
    heldout_split,
    run_distillation,
    run_options,
)
from app.core.exceptions import raise_config_error
from app.core.logging_config import get_logger
from app.services.metrics_service import write_csv

logger = get_logger(__name__)

SWEEP_KEYS = ("t0_fraction", "t_max", "t_min", "quantile", "lambda")
SWEEP_HEADER = ("value", "final_mean_kl", "eval_mean_kl", "perplexity", "greedy_match")


def parse_values(raw: str) -> List[str]:
    values = [part.strip() for part in raw.split(",") if part.strip()]
    if not values:
        raise_config_error("--values", "expected a comma-separated list", raw)
    return values


@click.command("sweep")
@click.option("--key", required=True, type=click.Choice(SWEEP_KEYS), help="train.<key> to vary")
@click.option("--values", "raw_values", required=True, help="Comma-separated values, e.g. 0.25,0.5,0.75")
@run_options
def sweep(run: RunContext, key: str, raw_values: str) -> None:
    """
    Distill once per value of train.<key>, all from the same teacher.

    Writes sweep_<key>.csv plus the per-value metrics under sweep_<key>/.
    """
    trainer = get_trainer_service(run)
    rows = []
    for value in parse_values(raw_values):
        point = run.with_overrides([f"train.{key}={value}"])
        artifacts, corpus, teacher = run_distillation(point, "egad", out=run.out / f"sweep_{key}" / value)
        summary = trainer.evaluate_student(artifacts.student, teacher, heldout_split(corpus))
        logger.info(f"[sweep] {key}={value}: eval KL {summary.mean_kl:.5f}")
        rows.append((value, artifacts.final_mean_kl, summary.mean_kl, summary.perplexity, summary.greedy_match))

    path = write_csv(run.out / f"sweep_{key}.csv", SWEEP_HEADER, rows)
    logger.info(f"Sweep table written to {path}")
