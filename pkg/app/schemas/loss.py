"""Loss schemas."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.core.autodiff import Tensor, matmul, parameter, reshape


@dataclass
class FeatureProjection:
    """Trainable linear bridge from student width to teacher width."""

    matrix: Tensor

    @classmethod
    def initialize(cls, d_student: int, d_teacher: int, seed: int) -> "FeatureProjection":
        """Bias-free map with normal(0, 0.02) entries."""
        rng = np.random.default_rng(seed)
        weights = rng.normal(0.0, 0.02, size=(d_student, d_teacher))
        return cls(matrix=parameter(weights, name="projection.matrix"))

    @classmethod
    def from_array(cls, weights: np.ndarray) -> "FeatureProjection":
        return cls(matrix=parameter(np.array(weights, dtype=np.float64), name="projection.matrix"))

    @property
    def d_student(self) -> int:
        return self.matrix.shape[0]

    @property
    def d_teacher(self) -> int:
        return self.matrix.shape[1]

    def apply(self, phi_s: Tensor) -> Tensor:
        """Project rows of ``phi_s`` ([..., d_student]) to teacher width."""
        if phi_s.ndim == 1:
            return reshape(matmul(reshape(phi_s, (1, -1)), self.matrix), (self.d_teacher,))
        return matmul(phi_s, self.matrix)

    def refresh(self) -> None:
        """Start a new graph from the current weights."""
        self.matrix = parameter(self.matrix.data.copy(), name="projection.matrix")


@dataclass
class LossBreakdown:
    """Per-token loss components and the weighted total for one step.

    ``per_token_feat``/``per_token_attn`` are exactly 0 on shallow tokens.
    """

    per_token_kl: np.ndarray
    per_token_feat: np.ndarray
    per_token_attn: np.ndarray
    per_token_total: np.ndarray
    weighted_total: float
    total: Optional[Tensor] = None
    token_losses: Optional[Tensor] = None
    student_logits: Optional[Tensor] = None
    ce_loss: Optional[float] = None
