"""Desk-scale acceptance runs on the bundled toy corpus.

The module trains one teacher with the desk preset's teacher budget, then
distills the default student under the desk preset for three seeds, once
with EGAD and once with uniform KD.
"""
import math
from pathlib import Path
from typing import Dict, List

import numpy as np
import pytest

from app.core.config import load_config
from app.schemas.config import ModelConfig, Preset, RunConfig
from app.schemas.corpus import PAD_ID, TokenizedCorpus
from app.schemas.entropy import CurriculumClock
from app.schemas.model import ParameterSet
from app.services.corpus_service import CorpusService
from app.services.diagnostics_service import DiagnosticsService
from app.services.entropy_service import switch_step
from app.services.trainer_service import TrainerService, total_steps

pytestmark = [pytest.mark.integration, pytest.mark.slow]

SEEDS = (0, 1, 2)
TOY_CORPUS = Path(__file__).resolve().parents[2] / "app" / "data" / "toy_corpus.txt"


@pytest.fixture(scope="module")
def desk() -> RunConfig:
    return load_config(preset=Preset.DESK)


@pytest.fixture(scope="module")
def toy(desk: RunConfig) -> TokenizedCorpus:
    return CorpusService().ingest_corpus(
        TOY_CORPUS, desk.teacher.max_seq_len, validation_ratio=desk.validation_ratio, seed=desk.train.seed
    )


@pytest.fixture(scope="module")
def desk_trainer() -> TrainerService:
    return TrainerService()


@pytest.fixture(scope="module")
def student_config(desk: RunConfig, toy: TokenizedCorpus) -> ModelConfig:
    return desk.build_student_config(toy.vocab.size)


@pytest.fixture(scope="module")
def toy_teacher(desk_trainer: TrainerService, desk: RunConfig, toy: TokenizedCorpus) -> ParameterSet:
    return desk_trainer.train_teacher(
        desk.build_teacher_config(toy.vocab.size), desk.build_teacher_train_config(), toy.train
    )


@pytest.fixture(scope="module")
def arms(desk_trainer, desk, toy_teacher, student_config, toy) -> Dict[str, List]:
    """EGAD and uniform-KD runs for every seed at the desk preset."""
    runs: Dict[str, List] = {"egad": [], "kd": []}
    for seed in SEEDS:
        config = desk.train.model_copy(update={"seed": seed, "teacher_cache": True})
        student = student_config.model_copy(update={"seed": seed + 1})
        runs["egad"].append(desk_trainer.distill_student(toy_teacher, student, config, toy.train))
        runs["kd"].append(desk_trainer.baseline_kd(toy_teacher, student, config, toy.train))
    return runs


class TestCurriculumDynamics:
    """Acceptance checks on the per-step metrics."""

    def test_phase_flip(self, arms):
        """Test weight-entropy correlation is negative before t0 and positive from t0 on."""
        for run in arms["egad"]:
            t0 = switch_step(run.total_steps, 0.5)
            for record in run.metrics:
                if record.weight_entropy_corr is None:
                    continue
                if record.step < t0:
                    assert record.weight_entropy_corr < 0, record.step
                else:
                    assert record.weight_entropy_corr > 0, record.step

    def test_gating_fraction(self, desk_trainer, desk, toy_teacher, toy):
        """Test the deep fraction follows the floor(qN) quantile rule batch by batch."""
        config = desk.train
        entropy = desk_trainer.entropy
        size = config.batch_size
        for start in range(0, size * 5, size):
            batch = toy.train[start:start + size]
            valid = np.flatnonzero(batch.reshape(-1) != PAD_ID)
            h = entropy.entropy_from_logits(desk_trainer.teacher_outputs(toy_teacher, batch).logits[valid])
            profile = entropy.profile(h, CurriculumClock(step=0, switch_step=1), config)
            n = h.size
            below = math.floor(config.quantile * n + 1e-12)

            assert profile.deep_fraction >= 1 - below / n
            if np.unique(h).size == n:
                assert profile.deep_fraction == pytest.approx(1 - below / n, abs=1e-15)

    def test_variance_direction(self, arms):
        """Test early-phase gradient variance is lower with entropy weights than uniform."""
        def early_variance(run) -> float:
            head = max(1, run.total_steps // 10)
            return float(np.mean([r.grad_variance for r in run.metrics[:head]]))

        weighted = np.median([early_variance(run) for run in arms["egad"]])
        uniform = np.median([early_variance(run) for run in arms["kd"]])

        assert weighted < uniform

    def test_egad_converges_lower(self, arms):
        """Test median final KL of EGAD does not exceed uniform KD and leads most of the second half."""
        final_egad = np.median([run.final_mean_kl for run in arms["egad"]])
        final_kd = np.median([run.final_mean_kl for run in arms["kd"]])
        diagnostics = DiagnosticsService()
        leads = []
        for egad, kd in zip(arms["egad"], arms["kd"]):
            a = np.asarray([kl for _, kl in diagnostics.kl_curve(egad.metrics)])
            b = np.asarray([kl for _, kl in diagnostics.kl_curve(kd.metrics)])
            half = len(a) // 2
            leads.append(float(np.mean(a[half:] < b[half:])))

        assert final_egad <= final_kd, (final_egad, final_kd)
        assert np.median(leads) >= 0.6, leads

    def test_cosines_do_not_decrease(self, arms):
        """Test midpoint feature and attention cosines end no lower than after epoch one."""
        feature_gain, attention_gain = [], []
        for run in arms["egad"]:
            first, last = run.epoch_cosines[0], run.epoch_cosines[-1]
            feature_gain.append(last[1] - first[1])
            attention_gain.append(last[2] - first[2])

        assert np.median(feature_gain) >= 0, feature_gain
        assert np.median(attention_gain) >= 0, attention_gain


class TestDegeneration:
    """EGAD with w = 1, T = 1, lambda = 0 against plain KD."""

    def test_matches_kd_for_100_steps(self, desk_trainer, desk, toy_teacher, student_config, toy):
        """Test the per-step losses agree to 1e-9 for 100 steps."""
        base = desk.train.model_copy(update={"batch_size": 16, "max_steps": 100, "seed": 0})
        degenerate = base.model_copy(update={
            "use_curriculum": False, "t_min": 1.0, "t_max": 1.0, "lam": 0.0, "quantile": 0.0,
        })
        assert total_steps(toy.train.shape[0], base) == 100

        egad = desk_trainer.distill_student(toy_teacher, student_config, degenerate, toy.train)
        kd = desk_trainer.baseline_kd(toy_teacher, student_config, base, toy.train)

        assert len(egad.metrics) == len(kd.metrics) == 100
        for a, b in zip(egad.metrics, kd.metrics):
            assert a.weighted_total == pytest.approx(b.weighted_total, abs=1e-9)


class TestEntropyDistribution:
    """Shape of the teacher entropy distribution."""

    def test_kde_integrates_to_one(self, desk_trainer, toy_teacher, toy):
        """Test the KDE over all training tokens integrates to 1 within 2%."""
        entropies = self._entropies(desk_trainer, toy_teacher, toy)
        curve = DiagnosticsService().entropy_kde(entropies)

        assert curve.integral() == pytest.approx(1.0, abs=0.02)

    def test_mass_at_low_entropy(self, desk_trainer, toy_teacher, toy):
        """Test the KDE mode sits below the median entropy, with a tail above it."""
        entropies = self._entropies(desk_trainer, toy_teacher, toy)
        curve = DiagnosticsService().entropy_kde(entropies)
        median = float(np.median(entropies))

        assert curve.mode < median, (curve.mode, median)
        assert float(np.mean(entropies)) > median

    @staticmethod
    def _entropies(trainer: TrainerService, teacher: ParameterSet, toy: TokenizedCorpus) -> np.ndarray:
        chunks = []
        for start in range(0, toy.train.shape[0], 64):
            batch = toy.train[start:start + 64]
            valid = np.flatnonzero(batch.reshape(-1) != PAD_ID)
            chunks.append(trainer.entropy.entropy_from_logits(trainer.teacher_outputs(teacher, batch).logits[valid]))
        return np.concatenate(chunks)
