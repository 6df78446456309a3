"""Configuration schemas: model architecture, training and run settings."""
from enum import Enum
from pathlib import Path
from typing import Literal, Optional
from pydantic import BaseModel, Field, ValidationInfo, field_validator, model_validator
from pydantic.config import ConfigDict


class Reduction(str, Enum):
    """Reduction applied by egad_total."""
    MEAN = "mean"
    SUM = "sum"


class Preset(str, Enum):
    """Named hyperparameter presets."""
    PAPER = "paper"
    DESK = "desk"


PAPER_LEARNING_RATE = 5e-6
DESK_LEARNING_RATE = 3e-4
# Teacher pretraining under the desk preset
DESK_TEACHER_LEARNING_RATE = 1e-3
DESK_TEACHER_EPOCHS = 20


class ModelSection(BaseModel):
    """Architecture knobs of one model as written in a run config."""

    model_config = ConfigDict(extra="forbid")

    d_model: int = Field(128, ge=1, description="Hidden width")
    n_layers: int = Field(4, ge=1, description="Number of transformer blocks")
    n_heads: int = Field(4, ge=1, description="Attention heads per block")
    d_ff: int = Field(512, ge=1, description="Feed-forward width")
    max_seq_len: int = Field(64, ge=2, description="Context window")
    activation: Literal["gelu", "relu"] = Field("gelu", description="FFN nonlinearity")

    @field_validator("n_heads")
    @classmethod
    def check_heads(cls, n_heads: int, info: ValidationInfo) -> int:
        """d_model must split evenly across heads."""
        d_model = info.data.get("d_model")
        if d_model is not None and d_model % n_heads != 0:
            raise ValueError(f"d_model ({d_model}) must be divisible by n_heads ({n_heads})")
        return n_heads


class ModelConfig(ModelSection):
    """Complete model configuration, including vocabulary and init seed."""

    vocab_size: int = Field(..., ge=2, description="Vocabulary size (padding included)")
    seed: int = Field(0, description="Initialization seed")


class TrainConfig(BaseModel):
    """Optimizer, curriculum and distillation hyperparameters."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    batch_size: int = Field(32, ge=1)
    epochs: int = Field(10, ge=0)
    max_steps: Optional[int] = Field(None, ge=0, description="Cap on optimizer steps")
    learning_rate: float = Field(PAPER_LEARNING_RATE, ge=0.0)
    weight_decay: float = Field(1e-2, ge=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    t0_fraction: float = Field(0.5, gt=0.0, lt=1.0, description="Curriculum switch as a fraction of steps")
    quantile: float = Field(1.0 / 3.0, ge=0.0, lt=1.0, description="Entropy threshold quantile q")
    lam: float = Field(0.5, ge=0.0, alias="lambda", description="Weight of feature+attention terms")
    t_min: float = Field(1.0, gt=0.0)
    t_max: float = Field(5.0, gt=0.0)
    seed: int = Field(0)
    reduction: Reduction = Field(Reduction.MEAN)
    compensate_t_squared: bool = Field(False, description="Multiply tempered KL by T_i^2")
    alpha_ce: float = Field(0.0, ge=0.0, description="Hard-label cross-entropy mixing coefficient")
    use_curriculum: bool = Field(True)
    use_adaptive_temperature: bool = Field(True)
    fixed_temperature: float = Field(1.0, gt=0.0, description="Temperature when adaptation is off")
    use_dual_path: bool = Field(True)
    teacher_cache: bool = Field(False, description="Precompute teacher outputs once")

    @field_validator("t_max")
    @classmethod
    def check_temperature_bounds(cls, t_max: float, info: ValidationInfo) -> float:
        """t_min must not exceed t_max."""
        t_min = info.data.get("t_min")
        if t_min is not None and t_max < t_min:
            raise ValueError(f"t_max ({t_max}) must be >= t_min ({t_min})")
        return t_max

    def as_baseline(self) -> "TrainConfig":
        """Uniform-KD arm: weights 1, T = 1, logits only."""
        return self.model_copy(update={
            "use_curriculum": False,
            "use_adaptive_temperature": False,
            "fixed_temperature": 1.0,
            "use_dual_path": False,
        })


class TeacherTrainSection(BaseModel):
    """Overrides of ``train`` used only while pretraining the teacher; unset keys inherit."""

    model_config = ConfigDict(extra="forbid")

    learning_rate: Optional[float] = Field(None, ge=0.0)
    epochs: Optional[int] = Field(None, ge=0)
    batch_size: Optional[int] = Field(None, ge=1)


class RunConfig(BaseModel):
    """Everything one CLI invocation needs."""

    model_config = ConfigDict(extra="forbid")

    teacher: ModelSection = Field(default_factory=ModelSection)
    student: ModelSection = Field(
        default_factory=lambda: ModelSection(d_model=64, n_layers=2, n_heads=4, d_ff=256)
    )
    train: TrainConfig = Field(default_factory=TrainConfig)
    teacher_train: TeacherTrainSection = Field(default_factory=TeacherTrainSection)
    corpus_path: Path = Field(Path("app/data/toy_corpus.txt"))
    output_dir: Path = Field(Path("runs/default"))
    run_label: str = Field("egad")
    baseline_kd: bool = Field(False, description="Run the uniform-KD arm in `distill`")
    validation_ratio: float = Field(0.05, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def check_shared_context(self):
        """Teacher and student read the same chunks."""
        if self.teacher.max_seq_len != self.student.max_seq_len:
            raise ValueError("teacher.max_seq_len and student.max_seq_len must match")
        return self

    def build_teacher_config(self, vocab_size: int) -> ModelConfig:
        """Teacher ModelConfig for a given vocabulary."""
        return ModelConfig(**self.teacher.model_dump(), vocab_size=vocab_size, seed=self.train.seed)

    def build_teacher_train_config(self) -> TrainConfig:
        """``train`` with the teacher_train overrides applied."""
        overrides = self.teacher_train.model_dump(exclude_none=True)
        return self.train.model_copy(update=overrides) if overrides else self.train

    def build_student_config(self, vocab_size: int) -> ModelConfig:
        """Student ModelConfig for a given vocabulary."""
        return ModelConfig(**self.student.model_dump(), vocab_size=vocab_size, seed=self.train.seed + 1)
