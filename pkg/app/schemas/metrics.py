"""Metrics schemas: per-step records, KDE curves, evaluation and gradcheck reports."""
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field
from pydantic.config import ConfigDict


class MetricsRecord(BaseModel):
    """One optimizer-step snapshot; one JSON line in the metrics sink.

    Statistics that are undefined for a batch (constant entropies, empty
    deep mask) are ``None``.
    """

    model_config = ConfigDict(extra="forbid")

    step: int = Field(..., ge=0)
    epoch: int = Field(..., ge=0)
    mean_kl: float = Field(..., ge=0.0, description="Untempered KL(teacher||student), token mean")
    weighted_total: float = Field(..., description="Objective value that was differentiated")
    feat_loss: float = Field(0.0, ge=0.0, description="Mean feature loss over deep tokens")
    attn_loss: float = Field(0.0, ge=0.0, description="Mean attention loss over deep tokens")
    mean_entropy: float = Field(..., ge=0.0)
    weight_entropy_corr: Optional[float] = Field(None, ge=-1.0, le=1.0)
    deep_fraction: float = Field(..., ge=0.0, le=1.0)
    grad_variance: float = Field(..., ge=0.0, description="Per-token logit-gradient variance")
    temperature_mean: float = Field(..., gt=0.0)
    threshold: Optional[float] = Field(None, description="Entropy threshold; None when the deep path is off")
    ce_loss: Optional[float] = Field(None, description="Hard-label cross-entropy (when mixed in)")
    feature_cosine: Optional[float] = None
    attention_cosine: Optional[float] = None
    weighted_grad_sq_sum: float = Field(..., ge=0.0)
    total_grad_sq: float = Field(..., ge=0.0)


class TrainingLogRecord(BaseModel):
    """One supervised (cross-entropy) optimizer step."""

    model_config = ConfigDict(extra="forbid")

    step: int = Field(..., ge=0)
    epoch: int = Field(..., ge=0)
    ce_loss: float = Field(..., ge=0.0)


@dataclass
class KdeCurve:
    """Gaussian kernel density estimate on an ascending grid."""

    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self) -> float:
        """Trapezoidal integral of the density over the grid."""
        widths = np.diff(self.grid)
        return float(np.sum(widths * (self.density[1:] + self.density[:-1]) / 2.0))

    @property
    def mode(self) -> float:
        return float(self.grid[int(np.argmax(self.density))])


class EvalSummary(BaseModel):
    """Held-out comparison of a student against its teacher."""

    mean_kl: float = Field(..., ge=0.0)
    perplexity: float = Field(..., gt=0.0)
    greedy_match: float = Field(..., ge=0.0, le=1.0)
    output_discrepancy: float = Field(..., ge=0.0)
    tokens: int = Field(..., ge=1)


class GradcheckEntry(BaseModel):
    """Finite-difference comparison for one primitive or loss."""

    name: str
    cases: int = Field(..., ge=1)
    max_rel_error: float = Field(..., ge=0.0)
    tolerance: float = Field(..., gt=0.0)
    passed: bool


class GradcheckReport(BaseModel):
    """Outcome of the full gradient validation suite."""

    step_size: float
    entries: List[GradcheckEntry] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(entry.passed for entry in self.entries)

    @property
    def failures(self) -> List[str]:
        return [entry.name for entry in self.entries if not entry.passed]
