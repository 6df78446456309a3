"""Shared fixtures for EGAD lab tests."""
from pathlib import Path
from typing import List

import numpy as np
import pytest

from app.core.config import Settings
from app.schemas.config import DESK_LEARNING_RATE, ModelConfig, TrainConfig
from app.schemas.model import ParameterSet
from app.services.diagnostics_service import DiagnosticsService
from app.services.entropy_service import EntropyService
from app.services.loss_service import LossService
from app.services.optimizer_service import OptimizerService
from app.services.oracle_service import OracleService
from app.services.trainer_service import TrainerService
from app.services.transformer_service import TransformerService


# ============================================================================
# Settings Fixtures
# ============================================================================

@pytest.fixture
def mock_settings() -> Settings:
    """Create settings for testing."""
    return Settings(
        PROJECT_NAME="Test EGAD Lab",
        VERSION="1.0.0-test",
        LOG_LEVEL="DEBUG",
        THREADS=1,
    )


# ============================================================================
# Model Config Fixtures
# ============================================================================

@pytest.fixture
def tiny_config() -> ModelConfig:
    """Teacher-sized tiny model: 2 layers, width 8."""
    return ModelConfig(vocab_size=7, d_model=8, n_layers=2, n_heads=2, d_ff=16, max_seq_len=6, seed=0)


@pytest.fixture
def tiny_student_config() -> ModelConfig:
    """Narrower student sharing the tiny vocabulary and window."""
    return ModelConfig(vocab_size=7, d_model=4, n_layers=2, n_heads=2, d_ff=8, max_seq_len=6, seed=1)


@pytest.fixture
def train_config() -> TrainConfig:
    """Short desk-rate training schedule."""
    return TrainConfig(batch_size=4, epochs=2, learning_rate=DESK_LEARNING_RATE, seed=0)


# ============================================================================
# Service Fixtures
# ============================================================================

@pytest.fixture
def transformer() -> TransformerService:
    return TransformerService()


@pytest.fixture
def entropy_service() -> EntropyService:
    return EntropyService()


@pytest.fixture
def loss_service() -> LossService:
    return LossService()


@pytest.fixture
def optimizer_service() -> OptimizerService:
    return OptimizerService()


@pytest.fixture
def diagnostics() -> DiagnosticsService:
    return DiagnosticsService()


@pytest.fixture
def oracle() -> OracleService:
    return OracleService()


@pytest.fixture
def trainer() -> TrainerService:
    return TrainerService()


@pytest.fixture
def tiny_teacher(transformer: TransformerService, tiny_config: ModelConfig) -> ParameterSet:
    """Freshly initialized tiny teacher."""
    return transformer.init_params(tiny_config)


# ============================================================================
# Sample Data Fixtures
# ============================================================================

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_corpus() -> np.ndarray:
    """Eight sequences of width 6 over ids 1..6; the last one padded."""
    rows: List[List[int]] = [
        [1, 2, 3, 1, 2, 3],
        [4, 5, 6, 4, 5, 6],
        [1, 1, 2, 2, 3, 3],
        [6, 5, 4, 3, 2, 1],
        [2, 4, 6, 2, 4, 6],
        [3, 1, 4, 1, 5, 6],
        [1, 2, 1, 2, 1, 2],
        [5, 6, 1, 0, 0, 0],
    ]
    return np.array(rows, dtype=np.int64)


@pytest.fixture
def corpus_file(tmp_path: Path) -> Path:
    """Small repetitive UTF-8 corpus on disk."""
    path = tmp_path / "corpus.txt"
    path.write_text("abcab abcab. " * 40 + "xyz zyx. " * 10, encoding="utf-8")
    return path


@pytest.fixture
def toy_corpus_path() -> Path:
    """The bundled toy corpus."""
    return Path(__file__).resolve().parents[1] / "app" / "data" / "toy_corpus.txt"


# ============================================================================
# CLI Fixtures
# ============================================================================

@pytest.fixture
def tiny_run_args(tmp_path: Path, corpus_file: Path) -> List[str]:
    """run_options for a seconds-long end-to-end run in a fresh directory."""
    overrides = [
        f"corpus_path={corpus_file}",
        "validation_ratio=0.2",
        "teacher.d_model=16", "teacher.n_layers=2", "teacher.n_heads=2",
        "teacher.d_ff=32", "teacher.max_seq_len=8",
        "student.d_model=8", "student.n_layers=2", "student.n_heads=2",
        "student.d_ff=16", "student.max_seq_len=8",
        "train.batch_size=16", "train.epochs=5", f"train.learning_rate={3e-3}",
    ]
    args = ["--out", str(tmp_path / "run"), "--seed", "0"]
    for assignment in overrides:
        args += ["--set", assignment]
    return args
