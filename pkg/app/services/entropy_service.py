"""Teacher-entropy signal: curriculum weights, temperatures and the deep-path mask."""
import math
from typing import Union

import numpy as np
from pydantic import ValidationError

from app.core.exceptions import ConfigError, InputError
from app.core.validators import validate_non_empty, validate_probability_rows
from app.schemas.config import TrainConfig
from app.schemas.entropy import CurriculumClock, EntropyProfile, TemperatureBounds
from app.services.base_service import BaseService

# Guards floor(q * N) against binary rounding of q (1/3 * 3 = 0.999...)
QUANTILE_GUARD = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def temperature_bounds(t_min: float, t_max: float) -> TemperatureBounds:
    """Build TemperatureBounds, reporting invalid bounds as ConfigError."""
    try:
        return TemperatureBounds(t_min=t_min, t_max=t_max)
    except ValidationError as e:
        first = e.errors()[0]
        key = "train." + (str(first["loc"][0]) if first["loc"] else "t_max")
        raise ConfigError(
            message=f"Invalid temperature bounds: {first['msg']}",
            details={"key": key, "reason": first["type"], "t_min": t_min, "t_max": t_max}
        )


def switch_step(total_steps: int, t0_fraction: float) -> int:
    """t0 = floor(t0_fraction * total_steps), at least 1."""
    return max(1, int(math.floor(t0_fraction * total_steps)))


class EntropyService(BaseService):
    """Pure functions over per-token entropies."""

    def token_entropy(self, probs: Union[np.ndarray, list]) -> np.ndarray:
        """
        Shannon entropy in nats of each probability row (0 ln 0 = 0).

        Args:
            probs: Rows of shape [..., V], each summing to 1.

        Returns:
            Entropies of shape [...], clipped to [0, ln V].

        Raises:
            InputError: If a row is not a distribution.
        """
        rows = validate_probability_rows(probs)
        return self._entropy(rows)

    def entropy_from_logits(self, logits: np.ndarray) -> np.ndarray:
        """Entropy of softmax(logits) at T = 1, computed in log space."""
        z = np.asarray(logits, dtype=np.float64)
        shifted = z - z.max(axis=-1, keepdims=True)
        log_p = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        p = np.exp(log_p)
        h = -np.sum(p * log_p, axis=-1)
        return np.clip(h, 0.0, math.log(z.shape[-1]))

    @staticmethod
    def _entropy(rows: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(rows > 0, rows * np.log(np.where(rows > 0, rows, 1.0)), 0.0)
        h = -terms.sum(axis=-1)
        return np.clip(h, 0.0, math.log(rows.shape[-1]))

    def curriculum_weights(self, entropies: np.ndarray, clock: CurriculumClock) -> np.ndarray:
        """sigmoid(1 - H) before the switch step, sigmoid(H) from it on."""
        h = self._check_entropies(entropies)
        if clock.phase == "early":
            return sigmoid(1.0 - h)
        return sigmoid(h)

    def adaptive_temperatures(self, entropies: np.ndarray, bounds: TemperatureBounds) -> np.ndarray:
        """T_i = t_min + (t_max - t_min) * sigmoid(H_i)."""
        if not isinstance(bounds, TemperatureBounds):
            bounds = temperature_bounds(*bounds)
        h = self._check_entropies(entropies)
        return bounds.t_min + (bounds.t_max - bounds.t_min) * sigmoid(h)

    def entropy_threshold(self, entropies: np.ndarray, quantile: float) -> float:
        """
        Element at sorted position floor(q * N).

        Roughly a q-fraction of tokens fall strictly below the result.

        Raises:
            InputError: If ``entropies`` is empty or q is outside [0, 1).
        """
        h = validate_non_empty(entropies, "entropies")
        if not 0.0 <= quantile < 1.0:
            raise InputError(
                message="quantile must lie in [0, 1)",
                details={"field": "quantile", "value": quantile}
            )
        ordered = np.sort(h, kind="stable")
        index = min(int(math.floor(quantile * h.size + QUANTILE_GUARD)), h.size - 1)
        return float(ordered[index])

    def deep_path_mask(self, entropies: np.ndarray, threshold: float) -> np.ndarray:
        """True where entropy >= threshold; ties take the deep path."""
        return np.asarray(entropies, dtype=np.float64) >= threshold

    def profile(
        self,
        entropies: np.ndarray,
        clock: CurriculumClock,
        train_config: TrainConfig,
    ) -> EntropyProfile:
        """
        Everything the loss needs from the teacher entropies of one batch.

        Ablation flags on ``train_config`` replace the corresponding piece:
        weights become 1, temperatures become ``fixed_temperature``, or the
        deep path is switched off (threshold +inf).
        """
        h = self._check_entropies(entropies)
        if train_config.use_curriculum:
            weights = self.curriculum_weights(h, clock)
        else:
            weights = np.ones_like(h)

        if train_config.use_adaptive_temperature:
            bounds = temperature_bounds(train_config.t_min, train_config.t_max)
            temperatures = self.adaptive_temperatures(h, bounds)
        else:
            temperatures = np.full_like(h, train_config.fixed_temperature)

        if train_config.use_dual_path and h.size:
            threshold = self.entropy_threshold(h, train_config.quantile)
        else:
            threshold = math.inf
        deep_mask = self.deep_path_mask(h, threshold)

        return EntropyProfile(
            entropies=h,
            weights=weights,
            temperatures=temperatures,
            deep_mask=deep_mask,
            threshold=threshold,
        )

    @staticmethod
    def _check_entropies(entropies: np.ndarray) -> np.ndarray:
        h = np.asarray(entropies, dtype=np.float64).reshape(-1)
        if np.any(h < 0) or not np.all(np.isfinite(h)):
            raise InputError(
                message="entropies must be finite and non-negative",
                details={"field": "entropies", "reason": "out_of_domain"}
            )
        return h
