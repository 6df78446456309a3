"""analyze-entropy: distribution of teacher token entropies."""
from typing import Optional

import click
import numpy as np

from app.commands.common import (
    RunContext,
    get_diagnostics_service,
    get_trainer_service,
    ingest,
    load_teacher,
    run_options,
    write_json,
)
from app.core.logging_config import get_logger
from app.schemas.corpus import PAD_ID
from app.services.diagnostics_service import DEFAULT_GRID_SIZE
from app.services.metrics_service import write_kde

logger = get_logger(__name__)


@click.command("analyze-entropy")
@click.option("--grid-size", type=click.IntRange(min=2), default=DEFAULT_GRID_SIZE, show_default=True)
@click.option("--bandwidth", type=click.FloatRange(min=0.0, min_open=True), default=None,
              help="KDE bandwidth; Silverman's rule when omitted")
@run_options
def analyze_entropy(run: RunContext, grid_size: int, bandwidth: Optional[float]) -> None:
    """
    Teacher entropy per training token and its kernel density.

    Writes entropy_kde.csv (entropy, density) and entropy_summary.json.
    """
    teacher, vocab = load_teacher(run)
    tokens = ingest(run, vocab=vocab).train
    trainer = get_trainer_service(run)
    batch_size = run.config.train.batch_size

    chunks = []
    for start in range(0, tokens.shape[0], batch_size):
        batch = tokens[start:start + batch_size]
        valid = np.flatnonzero(batch.reshape(-1) != PAD_ID)
        logits = trainer.teacher_outputs(teacher, batch).logits[valid]
        chunks.append(trainer.entropy.entropy_from_logits(logits))
    entropies = np.concatenate(chunks)

    curve = get_diagnostics_service().entropy_kde(entropies, grid_size=grid_size, bandwidth=bandwidth)
    path = write_kde(run.out / "entropy_kde.csv", curve)
    threshold = trainer.entropy.entropy_threshold(entropies, run.config.train.quantile)
    write_json(
        run.out / "entropy_summary.json",
        {
            "tokens": int(entropies.size),
            "mean": float(entropies.mean()),
            "median": float(np.median(entropies)),
            "max_possible": float(np.log(vocab.size)),
            "mode": curve.mode,
            "bandwidth": curve.bandwidth,
            "integral": curve.integral(),
            "quantile": run.config.train.quantile,
            "threshold": threshold,
            "deep_fraction": float(np.mean(entropies >= threshold)),
        },
    )
    logger.info(f"Entropy KDE over {entropies.size} tokens written to {path} (mode {curve.mode:.4f})")
