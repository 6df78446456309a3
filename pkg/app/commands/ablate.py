"""ablate: every training arm from one teacher checkpoint."""
from typing import Dict, List, Optional, Sequence, Tuple

import click

from app.commands.common import (
    RunContext,
    get_trainer_service,
    heldout_split,
    ingest,
    load_teacher,
    run_distillation,
    run_options,
)
from app.core.logging_config import get_logger
from app.services.metrics_service import write_csv

logger = get_logger(__name__)

ABLATION_HEADER = ("arm", "final_mean_kl", "eval_mean_kl", "perplexity", "greedy_match")

# arm -> overrides on top of the run config; "kd" and "sft" are handled by name
ARMS: Dict[str, Tuple[str, ...]] = {
    "egad": (),
    "kd": (),
    "sft": (),
    "no_curriculum": ("train.use_curriculum=false",),
    "no_adaptive_temperature": ("train.use_adaptive_temperature=false",),
    "no_dual_path": ("train.use_dual_path=false",),
}


@click.command("ablate")
@click.option("--arms", "arm_names", multiple=True, type=click.Choice(list(ARMS)),
              help="Arms to run (repeatable); all by default")
@run_options
def ablate(run: RunContext, arm_names: Sequence[str]) -> None:
    """
    Run EGAD, uniform KD, SFT and the single-component ablations.

    Writes ablation.csv with one row per arm, evaluated on the validation
    split against the same teacher.
    """
    teacher, vocab = load_teacher(run)
    trainer = get_trainer_service(run)
    rows: List[Tuple[str, Optional[float], float, float, float]] = []

    for arm in arm_names or ARMS:
        arm_run = run.with_overrides(ARMS[arm])
        corpus = ingest(arm_run, vocab=vocab)
        final_kl: Optional[float] = None
        if arm == "sft":
            student = trainer.train_sft(
                arm_run.config.build_student_config(vocab.size), arm_run.config.train, corpus.train
            )
        else:
            artifacts, _, _ = run_distillation(arm_run, arm)
            student, final_kl = artifacts.student, artifacts.final_mean_kl

        summary = trainer.evaluate_student(student, teacher, heldout_split(corpus))
        logger.info(
            f"[ablate] {arm}: eval KL {summary.mean_kl:.5f}, perplexity {summary.perplexity:.3f}, "
            f"greedy match {summary.greedy_match:.3f}"
        )
        rows.append((arm, final_kl, summary.mean_kl, summary.perplexity, summary.greedy_match))

    path = write_csv(run.out / "ablation.csv", ABLATION_HEADER, rows)
    logger.info(f"Ablation table written to {path}")
