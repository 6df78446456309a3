"""distill: EGAD (or uniform KD) from the saved teacher."""
import click

from app.commands.common import RunContext, run_distillation, run_options, write_json
from app.core.logging_config import get_logger

logger = get_logger(__name__)


@click.command("distill")
@click.option("--baseline-kd", is_flag=True, default=False, help="Run the uniform-KD arm instead of EGAD")
@run_options
def distill(run: RunContext, baseline_kd: bool) -> None:
    """
    Distill the teacher in --out into a fresh student.

    Requires teacher.ckpt and vocab.json from train-teacher. Writes
    metrics_<arm>.jsonl, kl_curve_<arm>.csv and student_<arm>.ckpt.
    """
    arm = "kd" if baseline_kd or run.config.baseline_kd else "egad"
    artifacts, _, _ = run_distillation(run, arm)
    write_json(
        run.out / f"distill_{arm}.json",
        {
            "arm": arm,
            "steps": artifacts.total_steps,
            "initial_mean_kl": artifacts.metrics[0].mean_kl if artifacts.metrics else None,
            "final_mean_kl": artifacts.final_mean_kl,
            "epoch_cosines": [
                {"epoch": epoch, "feature_cosine": feat, "attention_cosine": attn}
                for epoch, feat, attn in artifacts.epoch_cosines
            ],
        },
    )
