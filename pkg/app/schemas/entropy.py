"""Entropy signal schemas."""
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator
from pydantic.config import ConfigDict


class CurriculumClock(BaseModel):
    """Current optimizer step and the curriculum switch step."""

    model_config = ConfigDict(frozen=True)

    step: int = Field(..., ge=0, description="Current training step t")
    switch_step: int = Field(..., gt=0, description="Curriculum transition step t0")

    @property
    def phase(self) -> Literal["early", "late"]:
        return "early" if self.step < self.switch_step else "late"


class TemperatureBounds(BaseModel):
    """Range of the adaptive temperature."""

    model_config = ConfigDict(frozen=True)

    t_min: float = Field(1.0, gt=0.0)
    t_max: float = Field(5.0, gt=0.0)

    @model_validator(mode="after")
    def check_order(self):
        if self.t_max < self.t_min:
            raise ValueError(f"t_max ({self.t_max}) must be >= t_min ({self.t_min})")
        return self


@dataclass
class EntropyProfile:
    """Per-token teacher entropy and everything derived from it for one step.

    All arrays are 1-D over the valid (non-padding) tokens of a batch and are
    constants with respect to the student.
    """

    entropies: np.ndarray
    weights: np.ndarray
    temperatures: np.ndarray
    deep_mask: np.ndarray
    threshold: float

    @property
    def size(self) -> int:
        return int(self.entropies.shape[0])

    @property
    def deep_fraction(self) -> float:
        return float(self.deep_mask.mean()) if self.size else 0.0

    @property
    def deep_index(self) -> np.ndarray:
        return np.flatnonzero(self.deep_mask)
