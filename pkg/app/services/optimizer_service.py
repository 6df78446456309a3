"""AdamW with decoupled weight decay."""
import math
from typing import Dict, Mapping, Tuple

import numpy as np

from app.core.exceptions import raise_dimension_error
from app.schemas.config import TrainConfig
from app.schemas.training import OptimizerState
from app.services.base_service import BaseService


class OptimizerService(BaseService):
    """Functional AdamW: inputs are never mutated."""

    def adamw_step(
        self,
        params: Mapping[str, np.ndarray],
        grads: Mapping[str, np.ndarray],
        state: OptimizerState,
        train_config: TrainConfig,
    ) -> Tuple[Dict[str, np.ndarray], OptimizerState]:
        """
        One AdamW update.

        theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta

        Args:
            params: Parameter arrays by name.
            grads: Gradients by name; a missing name counts as zero.
            state: Moments from the previous step.
            train_config: Supplies lr, betas, eps and weight decay.

        Returns:
            New parameter arrays and the new optimizer state.

        Raises:
            DimensionError: If a gradient or moment shape differs from its parameter.
        """
        beta1, beta2 = train_config.beta1, train_config.beta2
        lr, wd, eps = train_config.learning_rate, train_config.weight_decay, train_config.eps
        step = state.step + 1
        bias1 = 1.0 - beta1 ** step
        bias2 = 1.0 - beta2 ** step

        new_params: Dict[str, np.ndarray] = {}
        new_state = OptimizerState(step=step)
        for name, theta in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(theta)
            m = state.m.get(name)
            v = state.v.get(name)
            if m is None:
                m, v = np.zeros_like(theta), np.zeros_like(theta)
            for label, arr in (("gradient", g), ("first moment", m), ("second moment", v)):
                if arr.shape != theta.shape:
                    raise_dimension_error(f"adamw_step {label} of {name}", theta.shape, arr.shape)

            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * (g * g)
            m_hat = m / bias1
            v_hat = v / bias2
            new_params[name] = theta - lr * (m_hat / (np.sqrt(v_hat) + eps)) - lr * wd * theta
            new_state.m[name] = m
            new_state.v[name] = v
        return new_params, new_state

    @staticmethod
    def global_grad_norm(grads: Mapping[str, np.ndarray]) -> float:
        return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
