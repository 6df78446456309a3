"""Brute-force reference computations.

Nothing here imports the fast paths: sums use ``math.fsum``, ranks use
``sorted`` and quantile positions use exact fractions.
"""
import math
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import OracleError
from app.schemas.config import TrainConfig
from app.services.base_service import BaseService

# Rows must sum to 1 within this tolerance to count as distributions
ROW_TOLERANCE = 1e-9


class OracleService(BaseService):
    """Reference implementations used to validate the fast paths."""

    def finite_difference_grad(
        self,
        fn: Callable[[np.ndarray], float],
        point: np.ndarray,
        step: float = 1e-5,
    ) -> np.ndarray:
        """
        Central-difference gradient of a scalar function.

        Raises:
            OracleError: If ``step`` is not positive or ``fn`` is non-finite nearby.
        """
        if not step > 0:
            raise OracleError(message="finite-difference step must be positive", details={"step": step})
        x = np.array(point, dtype=np.float64)
        grad = np.zeros_like(x)
        flat = x.reshape(-1)
        out = grad.reshape(-1)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + step
            f_plus = float(fn(x))
            flat[j] = original - step
            f_minus = float(fn(x))
            flat[j] = original
            if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
                raise OracleError(
                    message="function is not finite near the evaluation point",
                    details={"coordinate": j}
                )
            out[j] = (f_plus - f_minus) / (2.0 * step)
        return grad

    def reference_softmax(self, logits: Sequence[float], temperature: float = 1.0) -> List[float]:
        if not temperature > 0:
            raise OracleError(message="temperature must be positive", details={"temperature": temperature})
        scaled = [float(z) / temperature for z in logits]
        top = max(scaled)
        exps = [math.exp(s - top) for s in scaled]
        total = math.fsum(exps)
        return [e / total for e in exps]

    def _check_row(self, row: Sequence[float], name: str) -> List[float]:
        values = [float(p) for p in row]
        if not values or any(p < 0 or not math.isfinite(p) for p in values):
            raise OracleError(message=f"{name} is not a distribution", details={"field": name})
        if abs(math.fsum(values) - 1.0) > ROW_TOLERANCE:
            raise OracleError(message=f"{name} does not sum to 1", details={"field": name})
        return values

    def reference_entropy_kl(
        self,
        row_t: Sequence[float],
        row_s: Sequence[float],
        temperature: Optional[float] = None,
    ) -> Tuple[float, float]:
        """
        Entropy of the teacher row and KL(teacher || student).

        With ``temperature`` set, both rows are logits softened at that
        temperature; otherwise they are probabilities.

        Raises:
            OracleError: If a row is not a valid distribution.
        """
        if temperature is not None:
            row_t = self.reference_softmax(row_t, temperature)
            row_s = self.reference_softmax(row_s, temperature)
        p = self._check_row(row_t, "p_t")
        q = self._check_row(row_s, "p_s")
        if len(p) != len(q):
            raise OracleError(message="rows differ in length", details={"p_t": len(p), "p_s": len(q)})

        entropy = -math.fsum(pi * math.log(pi) for pi in p if pi > 0)
        if any(pi > 0 and qi == 0 for pi, qi in zip(p, q)):
            return entropy, math.inf
        kl = math.fsum(pi * (math.log(pi) - math.log(qi)) for pi, qi in zip(p, q) if pi > 0)
        return entropy, kl

    def reference_quantile(self, values: Sequence[float], q: float) -> float:
        """Full sort, then the element at floor(q * N) computed in exact arithmetic."""
        ordered = sorted(float(v) for v in values)
        if not ordered:
            raise OracleError(message="quantile of an empty list", details={"field": "values"})
        exact_q = Fraction(q).limit_denominator(1_000_000)
        index = math.floor(exact_q * len(ordered))
        return ordered[min(index, len(ordered) - 1)]

    def reference_sigmoid(self, x: float) -> float:
        return 1.0 / (1.0 + math.exp(-x))

    def reference_curriculum_weight(self, entropy: float, early: bool) -> float:
        return self.reference_sigmoid(1.0 - entropy) if early else self.reference_sigmoid(entropy)

    def reference_temperature(self, entropy: float, t_min: float, t_max: float) -> float:
        return t_min + (t_max - t_min) * self.reference_sigmoid(entropy)

    def reference_adamw(
        self,
        theta: float,
        grads: Sequence[float],
        train_config: TrainConfig,
    ) -> List[float]:
        """Scalar AdamW recurrence; returns theta after every step (initial value first)."""
        beta1, beta2 = train_config.beta1, train_config.beta2
        lr, wd, eps = train_config.learning_rate, train_config.weight_decay, train_config.eps
        m = v = 0.0
        trajectory = [float(theta)]
        for t, g in enumerate(grads, start=1):
            g = float(g)
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * (g * g)
            m_hat = m / (1.0 - beta1 ** t)
            v_hat = v / (1.0 - beta2 ** t)
            theta = theta - lr * (m_hat / (math.sqrt(v_hat) + eps)) - lr * wd * theta
            trajectory.append(theta)
        return trajectory

    def reference_pearson(self, xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
        n = len(xs)
        mx = math.fsum(xs) / n
        my = math.fsum(ys) / n
        sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
        sxx = math.fsum((x - mx) ** 2 for x in xs)
        syy = math.fsum((y - my) ** 2 for y in ys)
        if sxx == 0 or syy == 0:
            return None
        return sxy / math.sqrt(sxx * syy)
