"""train-teacher: pretrain the teacher and persist it with its vocabulary."""
import click

from app.commands.common import (
    TEACHER_CHECKPOINT,
    VOCAB_FILE,
    RunContext,
    get_trainer_service,
    ingest,
    run_options,
    write_json,
)
from app.core.checkpoint import Checkpoint, save_checkpoint
from app.core.logging_config import get_logger
from app.services.corpus_service import CorpusService
from app.services.metrics_service import MetricsSink

logger = get_logger(__name__)


@click.command("train-teacher")
@run_options
def train_teacher(run: RunContext) -> None:
    """
    Pretrain the teacher by next-token cross-entropy.

    Writes teacher.ckpt, vocab.json and teacher_log.jsonl under --out.
    """
    config = run.config
    corpus = ingest(run)
    teacher_config = config.build_teacher_config(corpus.vocab.size)
    trainer = get_trainer_service(run)

    with MetricsSink(run.out / "teacher_log.jsonl") as sink:
        teacher = trainer.train_teacher(
            teacher_config, config.build_teacher_train_config(), corpus.train, on_step=sink.append
        )
        steps = sink.count

    CorpusService.save_vocab(corpus.vocab, run.out / VOCAB_FILE)
    path = save_checkpoint(
        run.out / TEACHER_CHECKPOINT,
        Checkpoint(params=teacher, step=steps, seed=config.train.seed, metadata={"run_label": config.run_label}),
    )

    summary = {"checkpoint": str(path), "steps": steps, "vocab_size": corpus.vocab.size}
    if len(corpus.validation):
        summary["validation_ce"] = trainer.cross_entropy_on(teacher, corpus.validation)
    write_json(run.out / "teacher_summary.json", summary)
    logger.info(f"Teacher saved to {path} ({steps} steps)")
