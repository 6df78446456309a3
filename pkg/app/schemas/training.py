"""Training state schemas."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from app.schemas.metrics import MetricsRecord
from app.schemas.model import ParameterSet


@dataclass
class OptimizerState:
    """AdamW first/second moments per parameter name plus the step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, tensors: Mapping[str, np.ndarray]) -> "OptimizerState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in tensors.items()},
            v={name: np.zeros_like(arr) for name, arr in tensors.items()},
            step=0,
        )

    def copy(self) -> "OptimizerState":
        return OptimizerState(
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            step=self.step,
        )


@dataclass
class RunArtifacts:
    """What a distillation (or KD) run produces."""

    student: ParameterSet
    metrics: List[MetricsRecord] = field(default_factory=list)
    projection: Optional[np.ndarray] = None
    optimizer_state: Optional[OptimizerState] = None
    checkpoints: List[Path] = field(default_factory=list)
    arm: str = "egad"
    # (epoch, feature cosine, attention cosine), token-weighted over the epoch
    epoch_cosines: List[Tuple[int, Optional[float], Optional[float]]] = field(default_factory=list)

    @property
    def total_steps(self) -> int:
        return len(self.metrics)

    @property
    def final_mean_kl(self) -> Optional[float]:
        return self.metrics[-1].mean_kl if self.metrics else None
