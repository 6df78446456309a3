"""eval: compare a distilled student with its teacher on the validation split."""
import json

import click

from app.commands.common import (
    RunContext,
    get_trainer_service,
    heldout_split,
    ingest,
    load_teacher,
    run_options,
    student_checkpoint_path,
    write_json,
)
from app.core.checkpoint import load_checkpoint
from app.core.logging_config import get_logger
from app.schemas.corpus import PAD_ID

logger = get_logger(__name__)

SAMPLE_PROMPT_LEN = 16
SAMPLE_NEW_TOKENS = 32
VARIANCE_SEQUENCES = 4


@click.command("eval")
@click.option("--arm", default="egad", show_default=True, help="Which student_<arm>.ckpt to evaluate")
@click.option("--samples/--no-samples", default=True, help="Log greedy teacher/student continuations")
@click.option("--param-variance", is_flag=True, default=False,
              help="Also measure full-parameter gradient variance on a micro-batch (slow)")
@run_options
def evaluate(run: RunContext, arm: str, samples: bool, param_variance: bool) -> None:
    """Print mean KL, perplexity and greedy-match rate as JSON on stdout."""
    teacher, vocab = load_teacher(run)
    student = load_checkpoint(student_checkpoint_path(run, arm)).params
    corpus = ingest(run, vocab=vocab)
    heldout = heldout_split(corpus)

    trainer = get_trainer_service(run)
    summary = trainer.evaluate_student(student, teacher, heldout)
    payload = {"arm": arm, **summary.model_dump()}
    if param_variance:
        micro = heldout[:VARIANCE_SEQUENCES]
        train = run.config.train
        payload["param_grad_variance"] = {
            "weighted": trainer.parameter_grad_variance(teacher, student, train, micro),
            "uniform": trainer.parameter_grad_variance(
                teacher, student, train.model_copy(update={"use_curriculum": False}), micro
            ),
        }
    write_json(run.out / f"eval_{arm}.json", payload)
    click.echo(json.dumps(payload, sort_keys=True))

    if samples:
        row = heldout[0]
        prompt = row[row != PAD_ID][:SAMPLE_PROMPT_LEN]
        for label, params in (("teacher", teacher), ("student", student)):
            tokens = trainer.transformer.generate_greedy(params, prompt, SAMPLE_NEW_TOKENS)
            logger.info(f"{label} sample: {vocab.decode(tokens)!r}")
