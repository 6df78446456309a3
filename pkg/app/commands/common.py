"""Shared options, dependencies and artifact helpers for the subcommands."""
import json
import sys
from dataclasses import dataclass, field
from functools import wraps
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence, Tuple

import click
import numpy as np

from app.core.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from app.core.config import load_config
from app.core.exceptions import ConfigError
from app.core.logging_config import get_logger
from app.schemas.config import Preset, RunConfig
from app.schemas.corpus import TokenizedCorpus, Vocabulary
from app.schemas.model import ParameterSet
from app.schemas.training import RunArtifacts
from app.services.corpus_service import CorpusService
from app.services.diagnostics_service import DiagnosticsService
from app.services.metrics_service import MetricsSink, write_kl_curve
from app.services.trainer_service import PROJECTION_NAME, TrainerService

logger = get_logger(__name__)

TEACHER_CHECKPOINT = "teacher.ckpt"
VOCAB_FILE = "vocab.json"


@dataclass
class RunContext:
    """A validated RunConfig plus the raw inputs it was built from."""

    config: RunConfig
    config_path: Optional[Path] = None
    preset: Optional[Preset] = None
    overrides: List[str] = field(default_factory=list)
    quiet: bool = False

    @property
    def out(self) -> Path:
        return Path(self.config.output_dir)

    def with_overrides(self, extra: Sequence[str]) -> "RunContext":
        """Rebuild the config with more ``key=value`` overrides applied last."""
        overrides = [*self.overrides, *extra]
        return RunContext(
            config=load_config(self.config_path, self.preset, overrides),
            config_path=self.config_path,
            preset=self.preset,
            overrides=overrides,
            quiet=self.quiet,
        )


def run_options(command: Callable) -> Callable:
    """Attach --config/--out/--seed/--preset/--set and build a RunContext."""

    @click.option("--config", "config_path", type=click.Path(dir_okay=False, path_type=Path), default=None,
                  help="YAML file of dotted keys (e.g. student.n_layers: 2)")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), default=None,
                  help="Output directory (overrides output_dir)")
    @click.option("--seed", type=int, default=None, help="Run seed (overrides train.seed)")
    @click.option("--preset", type=click.Choice([p.value for p in Preset]), default=None,
                  help="Hyperparameter preset")
    @click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
                  help="Override one config key; repeatable")
    @click.pass_context
    @wraps(command)
    def wrapper(ctx: click.Context, config_path, out_dir, seed, preset, overrides, **kwargs):
        extra = list(overrides)
        if seed is not None:
            extra.append(f"train.seed={seed}")
        if out_dir is not None:
            extra.append(f"output_dir={out_dir}")
        preset_value = Preset(preset) if preset else None
        run = RunContext(
            config=load_config(config_path, preset_value, extra),
            config_path=config_path,
            preset=preset_value,
            overrides=extra,
            quiet=bool(ctx.obj and ctx.obj.get("quiet")),
        )
        logger.debug(f"Resolved configuration: {run.config.model_dump(mode='json')}")
        return command(run, **kwargs)

    return wrapper


# Dependencies

def get_trainer_service(run: RunContext) -> TrainerService:
    """Get a TrainerService instance."""
    return TrainerService(show_progress=not run.quiet and sys.stderr.isatty())


def get_corpus_service() -> CorpusService:
    """Get a CorpusService instance."""
    return CorpusService()


def get_diagnostics_service() -> DiagnosticsService:
    """Get a DiagnosticsService instance."""
    return DiagnosticsService()


# Artifacts

def ingest(run: RunContext, vocab: Optional[Vocabulary] = None) -> TokenizedCorpus:
    config = run.config
    return get_corpus_service().ingest_corpus(
        config.corpus_path,
        config.teacher.max_seq_len,
        validation_ratio=config.validation_ratio,
        seed=config.train.seed,
        vocab=vocab,
    )


def load_teacher(run: RunContext) -> Tuple[ParameterSet, Vocabulary]:
    """Teacher checkpoint and vocabulary from the output directory.

    Raises:
        DependencyError: If either artifact is missing or corrupt.
    """
    checkpoint = load_checkpoint(run.out / TEACHER_CHECKPOINT)
    vocab = CorpusService.load_vocab(run.out / VOCAB_FILE)
    if checkpoint.params.config.vocab_size != vocab.size:
        raise ConfigError(
            message="teacher checkpoint and vocabulary disagree",
            details={"key": "vocab_size", "checkpoint": checkpoint.params.config.vocab_size, "vocab": vocab.size}
        )
    return checkpoint.params, vocab


def student_checkpoint_path(run: RunContext, arm: str) -> Path:
    return run.out / f"student_{arm}.ckpt"


def run_distillation(
    run: RunContext, arm: str, out: Optional[Path] = None
) -> Tuple[RunArtifacts, TokenizedCorpus, ParameterSet]:
    """Distill (or KD) from the saved teacher, writing metrics, curve and checkpoint.

    The teacher is read from the run's output directory; artifacts go to
    ``out`` when given.
    """
    out = out or run.out
    teacher, vocab = load_teacher(run)
    corpus = ingest(run, vocab=vocab)
    trainer = get_trainer_service(run)
    student_config = run.config.build_student_config(vocab.size)
    train_config = run.config.train.as_baseline() if arm == "kd" else run.config.train

    with MetricsSink(out / f"metrics_{arm}.jsonl") as sink:
        artifacts = trainer.distill_student(
            teacher, student_config, train_config, corpus.train, on_step=sink.append, arm=arm
        )
    if artifacts.metrics:
        logger.info(
            f"[{arm}] mean KL step 0: {artifacts.metrics[0].mean_kl:.5f}, "
            f"final: {artifacts.metrics[-1].mean_kl:.5f}"
        )
    write_kl_curve(out / f"kl_curve_{arm}.csv", get_diagnostics_service().kl_curve(artifacts.metrics))
    extras = {} if artifacts.projection is None else {PROJECTION_NAME: artifacts.projection}
    path = save_checkpoint(
        out / f"student_{arm}.ckpt",
        Checkpoint(
            params=artifacts.student,
            step=artifacts.total_steps,
            seed=run.config.train.seed,
            optimizer_state=artifacts.optimizer_state,
            extras=extras,
            metadata={"arm": arm, "run_label": run.config.run_label},
        ),
    )
    artifacts.checkpoints.append(path)
    return artifacts, corpus, teacher


def write_json(path: Path, payload: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def heldout_split(corpus: TokenizedCorpus) -> np.ndarray:
    """Validation split, or the training split when the corpus is too small to hold one out."""
    if len(corpus.validation):
        return corpus.validation
    logger.warning("No validation split; evaluating on the training split")
    return corpus.train
