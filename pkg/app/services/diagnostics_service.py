"""Diagnostics: gradient variance, correlations, KDE, alignment cosines, output discrepancy."""
import math
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.autodiff import log_softmax_rows, as_tensor
from app.core.exceptions import InputError
from app.core.validators import validate_same_shape
from app.schemas.loss import FeatureProjection
from app.schemas.metrics import KdeCurve, MetricsRecord
from app.schemas.model import ForwardTrace
from app.services.base_service import BaseService

DEFAULT_GRID_SIZE = 512


class DiagnosticsService(BaseService):
    """Measured quantities; undefined statistics come back as ``None``."""

    def grad_variance(self, per_token_grads: Sequence[np.ndarray]) -> float:
        """
        (1/N) * sum_i ||g_i - mean(g)||^2.

        Raises:
            InputError: If there are no gradients or their shapes differ.
        """
        grads = self._stack_grads(per_token_grads)
        centered = grads - grads.mean(axis=0, keepdims=True)
        return float(np.mean(np.sum(centered * centered, axis=1)))

    def weighted_gradient_bound(
        self,
        per_token_grads: Sequence[np.ndarray],
        weights: Sequence[float],
    ) -> Tuple[float, float]:
        """
        Both sides of ||sum_i w_i g_i||^2 <= sum_i w_i^2 ||g_i||^2.

        The gradients share one coordinate space (here the vocabulary
        logits), so the left side is not trivially equal to the right.
        The inequality is reported, not enforced.
        """
        grads = self._stack_grads(per_token_grads)
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.shape[0] != grads.shape[0]:
            raise InputError(
                message="one weight per gradient is required",
                details={"weights": int(w.shape[0]), "gradients": int(grads.shape[0])}
            )
        weighted = grads * w[:, None]
        combined = weighted.sum(axis=0)
        lhs = float(np.dot(combined, combined))
        rhs = float(np.sum(weighted * weighted))
        return lhs, rhs

    @staticmethod
    def _stack_grads(per_token_grads: Sequence[np.ndarray]) -> np.ndarray:
        if len(per_token_grads) == 0:
            raise InputError(message="no per-token gradients", details={"field": "per_token_grads"})
        shapes = {np.shape(g) for g in per_token_grads}
        if len(shapes) != 1:
            raise InputError(
                message="per-token gradients must share a shape",
                details={"shapes": sorted(str(s) for s in shapes)}
            )
        return np.stack([np.asarray(g, dtype=np.float64).reshape(-1) for g in per_token_grads])

    def weight_entropy_correlation(self, weights: Sequence[float], entropies: Sequence[float]) -> Optional[float]:
        """Pearson correlation; ``None`` when either input is constant or too short."""
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        h = np.asarray(entropies, dtype=np.float64).reshape(-1)
        if w.shape != h.shape:
            raise InputError(
                message="weights and entropies must have equal lengths",
                details={"weights": int(w.size), "entropies": int(h.size)}
            )
        if w.size < 2:
            return None
        wc, hc = w - w.mean(), h - h.mean()
        denom = math.sqrt(float(np.dot(wc, wc)) * float(np.dot(hc, hc)))
        if denom == 0.0:
            return None
        return float(np.clip(np.dot(wc, hc) / denom, -1.0, 1.0))

    def silverman_bandwidth(self, samples: np.ndarray) -> float:
        """0.9 * min(sd, IQR / 1.34) * N^(-1/5); sd alone when the IQR is zero."""
        x = np.asarray(samples, dtype=np.float64)
        sd = float(np.std(x, ddof=1))
        q75, q25 = np.percentile(x, [75, 25])
        iqr = float(q75 - q25)
        spread = min(sd, iqr / 1.34) if iqr > 0 else sd
        return 0.9 * spread * x.size ** (-0.2)

    def entropy_kde(
        self,
        entropies: Sequence[float],
        grid_size: int = DEFAULT_GRID_SIZE,
        bandwidth: Optional[float] = None,
    ) -> KdeCurve:
        """
        Gaussian KDE on a grid spanning [min - 3h, max + 3h].

        Raises:
            InputError: With fewer than two samples, or zero spread and no
                explicit bandwidth.
        """
        x = np.asarray(entropies, dtype=np.float64).reshape(-1)
        if x.size < 2:
            raise InputError(
                message="entropy_kde needs at least two samples",
                details={"field": "entropies", "count": int(x.size)}
            )
        if grid_size < 2:
            raise InputError(message="grid_size must be >= 2", details={"grid_size": grid_size})
        h = float(bandwidth) if bandwidth is not None else self.silverman_bandwidth(x)
        # identical samples leave a rounding-level Silverman width, not an exact 0
        if not h > 0 or (bandwidth is None and float(np.ptp(x)) == 0.0):
            raise InputError(
                message="samples have zero spread; pass an explicit bandwidth",
                details={"field": "bandwidth"}
            )
        grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid_size)
        density = np.zeros(grid_size)
        # chunked to bound memory on large token sets
        for start in range(0, x.size, 4096):
            chunk = x[start:start + 4096]
            u = (grid[:, None] - chunk[None, :]) / h
            density += np.exp(-0.5 * u * u).sum(axis=1)
        density /= x.size * h * math.sqrt(2.0 * math.pi)
        return KdeCurve(grid=grid, density=density, bandwidth=h)

    def cosine_rows(self, a: np.ndarray, b: np.ndarray) -> Optional[float]:
        """Mean row-wise cosine similarity; ``None`` for zero rows."""
        a, b = validate_same_shape("cosine_rows", np.atleast_2d(a), np.atleast_2d(b))
        if a.shape[0] == 0:
            return None
        norms = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
        dots = np.sum(a * b, axis=-1)
        cos = np.divide(dots, norms, out=np.zeros_like(dots), where=norms > 0)
        return float(np.mean(cos))

    def midlayer_cosine(
        self,
        teacher_trace: ForwardTrace,
        student_trace: ForwardTrace,
        projection: FeatureProjection,
        deep_mask: np.ndarray,
    ) -> Tuple[Optional[float], Optional[float]]:
        """
        Mean cosine over deep-masked tokens at each model's midpoint layer.

        Features compare teacher hidden states against projected student
        hidden states; attention compares head-averaged rows.

        Returns:
            (feature_cosine, attention_cosine), both ``None`` for an empty mask.
        """
        mask = np.asarray(deep_mask, dtype=bool)
        if not mask.any():
            return None, None
        t_mid = teacher_trace.n_layers // 2
        s_mid = student_trace.n_layers // 2
        phi_t = teacher_trace.hidden[t_mid].data
        phi_s = student_trace.hidden[s_mid].data @ projection.matrix.data
        # [B, H, S, S] -> head-averaged [B, S, S]
        attn_t = teacher_trace.attention[t_mid].data.mean(axis=1)
        attn_s = student_trace.attention[s_mid].data.mean(axis=1)
        if mask.shape != phi_t.shape[:2]:
            raise InputError(
                message="deep_mask must cover every [batch, position]",
                details={"mask": list(mask.shape), "expected": list(phi_t.shape[:2])}
            )
        return self.cosine_rows(phi_t[mask], phi_s[mask]), self.cosine_rows(attn_t[mask], attn_s[mask])

    def output_discrepancy(
        self,
        teacher_logits: np.ndarray,
        student_logits: np.ndarray,
        from_logits: bool = True,
    ) -> float:
        """Mean over tokens of the squared L2 distance between probability rows.

        With ``from_logits=False`` the inputs already are probability rows.
        """
        zt, zs = validate_same_shape("output_discrepancy", teacher_logits, student_logits)
        pt = zt.reshape(-1, zt.shape[-1])
        ps = zs.reshape(-1, zs.shape[-1])
        if from_logits:
            pt = np.exp(log_softmax_rows(as_tensor(pt)).data)
            ps = np.exp(log_softmax_rows(as_tensor(ps)).data)
        return float(np.sum((pt - ps) ** 2) / pt.shape[0])

    def kl_curve(self, records: Iterable[MetricsRecord]) -> List[Tuple[int, float]]:
        """(step, mean_kl) rows for plotting."""
        return [(record.step, record.mean_kl) for record in records]
