"""Distillation losses: KL, tempered KL, feature/attention alignment and the weighted total."""
import math
from typing import Optional, Sequence, Union

import numpy as np

from app.core import autodiff as ad
from app.core.autodiff import Tensor
from app.core.exceptions import InputError, raise_dimension_error
from app.core.validators import validate_probability_rows, validate_temperature
from app.schemas.config import Reduction, TrainConfig
from app.schemas.entropy import EntropyProfile
from app.schemas.loss import FeatureProjection, LossBreakdown
from app.services.base_service import BaseService

ArrayOrTensor = Union[np.ndarray, Sequence[float], Tensor]


def _constant(value: ArrayOrTensor) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)


class LossService(BaseService):
    """Loss terms as graph builders over student tensors; teacher inputs are constants."""

    def kl_divergence(self, p_t: np.ndarray, p_s: np.ndarray) -> Union[float, np.ndarray]:
        """
        KL(p_t || p_s) per row with 0 ln 0 = 0.

        Returns ``math.inf`` for rows where p_t > 0 but p_s = 0.

        Raises:
            InputError: If either input is not a distribution or shapes differ.
        """
        pt = validate_probability_rows(p_t, "p_t")
        ps = validate_probability_rows(p_s, "p_s")
        if pt.shape != ps.shape:
            raise InputError(
                message="p_t and p_s must have the same shape",
                details={"p_t": list(pt.shape), "p_s": list(ps.shape)}
            )
        support = pt > 0
        violated = np.any(support & (ps <= 0), axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(
                support,
                pt * (np.log(np.where(support, pt, 1.0)) - np.log(np.where(ps > 0, ps, 1.0))),
                0.0,
            )
        kl = np.maximum(terms.sum(axis=-1), 0.0)
        kl = np.where(violated, math.inf, kl)
        return float(kl) if kl.ndim == 0 else kl

    def kl_from_logits(self, z_t: np.ndarray, z_s: np.ndarray) -> np.ndarray:
        """Untempered KL(softmax(z_t) || softmax(z_s)) per row, as arrays."""
        log_pt = ad.log_softmax_rows(ad.as_tensor(z_t)).data
        log_ps = ad.log_softmax_rows(ad.as_tensor(z_s)).data
        return np.maximum(np.sum(np.exp(log_pt) * (log_pt - log_ps), axis=-1), 0.0)

    def tempered_kl(
        self,
        z_t: ArrayOrTensor,
        z_s: ArrayOrTensor,
        temperature: Union[float, np.ndarray],
        compensate_t_squared: bool = False,
    ) -> Tensor:
        """
        KL(softmax(z_t / T) || softmax(z_s / T)) per row, differentiable in ``z_s``.

        Args:
            z_t: Teacher logits [V] or [N, V] (constant).
            z_s: Student logits of the same shape.
            temperature: Scalar or one temperature per row.
            compensate_t_squared: Multiply each row by T^2.

        Returns:
            Scalar tensor for a single row, else a [N] tensor.

        Raises:
            DomainError: If any temperature is <= 0.
            DimensionError: If the logit shapes differ.
        """
        t = validate_temperature(temperature)
        z_s = ad.as_tensor(z_s)
        zt = _constant(z_t)
        if zt.shape != z_s.shape:
            raise_dimension_error("tempered_kl", zt.shape, z_s.shape)

        log_pt = ad.log_softmax_rows(ad.as_tensor(zt), t).data
        pt = np.exp(log_pt)
        log_ps = ad.log_softmax_rows(z_s, t)
        kl = ad.sum(ad.mul(pt, ad.sub(log_pt, log_ps)), axis=-1)
        if compensate_t_squared:
            kl = ad.mul(kl, np.broadcast_to(t ** 2, kl.shape).copy())
        return kl

    def feature_loss(self, phi_t: ArrayOrTensor, phi_s: ArrayOrTensor, proj: FeatureProjection) -> Tensor:
        """
        ||phi_t - proj(phi_s)||^2 / d_teacher per row.

        Raises:
            DimensionError: If widths disagree with the projection.
        """
        phi_s = ad.as_tensor(phi_s)
        target = _constant(phi_t)
        if phi_s.shape[-1] != proj.d_student:
            raise_dimension_error("feature_loss", proj.d_student, phi_s.shape[-1])
        if target.shape[-1] != proj.d_teacher or target.shape[:-1] != phi_s.shape[:-1]:
            raise_dimension_error("feature_loss", phi_s.shape[:-1] + (proj.d_teacher,), target.shape)
        diff = ad.sub(target, proj.apply(phi_s))
        return ad.scale(ad.sum(ad.mul(diff, diff), axis=-1), 1.0 / proj.d_teacher)

    def attention_loss(self, attn_t: ArrayOrTensor, attn_s: ArrayOrTensor) -> Tensor:
        """
        Squared distance between head-averaged attention rows, divided by seq.

        Args:
            attn_t: Teacher rows [H_t, S] or [N, H_t, S] (constant).
            attn_s: Student rows [H_s, S] or [N, H_s, S].

        Raises:
            InputError: If the key lengths differ.
        """
        attn_s = ad.as_tensor(attn_s)
        target = _constant(attn_t)
        if target.shape[-1] != attn_s.shape[-1]:
            raise InputError(
                message="Teacher and student attention rows cover different sequence lengths",
                details={"teacher": target.shape[-1], "student": attn_s.shape[-1]}
            )
        if target.ndim != attn_s.ndim or target.shape[:-2] != attn_s.shape[:-2]:
            raise_dimension_error("attention_loss", target.shape, attn_s.shape)
        seq = target.shape[-1]
        diff = ad.sub(target.mean(axis=-2), ad.mean(attn_s, axis=-2))
        return ad.scale(ad.sum(ad.mul(diff, diff), axis=-1), 1.0 / seq)

    def token_loss(self, kl_i, feat_i, attn_i, deep, lam: float):
        """kl_i when shallow, kl_i + lam * (feat_i + attn_i) when deep."""
        kl = np.asarray(kl_i, dtype=np.float64)
        extra = np.asarray(feat_i, dtype=np.float64) + np.asarray(attn_i, dtype=np.float64)
        out = np.where(np.asarray(deep, dtype=bool), kl + lam * extra, kl)
        return float(out) if out.ndim == 0 else out

    def egad_total(
        self,
        weights: ArrayOrTensor,
        token_losses: ArrayOrTensor,
        reduction: Union[Reduction, str] = Reduction.MEAN,
    ) -> Tensor:
        """
        Sum of w_i * L_i, divided by the token count for ``mean``.

        Raises:
            InputError: If the lengths differ or are zero.
        """
        w = _constant(weights).reshape(-1)
        losses = ad.as_tensor(token_losses)
        if losses.ndim != 1 or w.shape[0] != losses.shape[0]:
            raise InputError(
                message="weights and token losses must have equal lengths",
                details={"weights": int(w.shape[0]), "losses": list(losses.shape)}
            )
        if w.size == 0:
            raise InputError(message="no tokens to reduce", details={"field": "token_losses"})
        total = ad.sum(ad.mul(w, losses))
        if Reduction(reduction) == Reduction.MEAN:
            total = ad.scale(total, 1.0 / w.size)
        return total

    def cross_entropy(self, logits: Tensor, targets: np.ndarray) -> Tensor:
        """Per-row negative log-likelihood of ``targets`` under softmax(logits)."""
        n, vocab = logits.shape
        log_probs = ad.reshape(ad.log_softmax_rows(logits), (n * vocab, 1))
        flat = np.arange(n) * vocab + np.asarray(targets, dtype=np.int64)
        return ad.neg(ad.reshape(ad.embedding(log_probs, flat), (n,)))

    def egad_objective(
        self,
        teacher_logits: np.ndarray,
        student_logits: Tensor,
        profile: EntropyProfile,
        train_config: TrainConfig,
        teacher_features: Optional[np.ndarray] = None,
        student_features: Optional[Tensor] = None,
        teacher_attention: Optional[np.ndarray] = None,
        student_attention: Optional[Tensor] = None,
        projection: Optional[FeatureProjection] = None,
    ) -> LossBreakdown:
        """
        Gated, entropy-weighted distillation objective for one batch.

        Token-major inputs cover the N valid tokens; the feature and
        attention inputs cover only the deep tokens, in ``profile.deep_index``
        order. Shallow tokens get exact zeros for both alignment terms.
        """
        n = profile.size
        kl = self.tempered_kl(
            teacher_logits, student_logits, profile.temperatures, train_config.compensate_t_squared
        )
        deep_idx = profile.deep_index
        per_feat = np.zeros(n)
        per_attn = np.zeros(n)
        token_losses = kl
        if deep_idx.size and projection is not None and student_features is not None:
            feat = self.feature_loss(teacher_features, student_features, projection)
            attn = self.attention_loss(teacher_attention, student_attention)
            per_feat[deep_idx] = feat.data
            per_attn[deep_idx] = attn.data
            extra = ad.scatter_rows(ad.add(feat, attn), deep_idx, n)
            token_losses = ad.add(kl, ad.scale(extra, train_config.lam))

        total = self.egad_total(profile.weights, token_losses, train_config.reduction)
        return LossBreakdown(
            per_token_kl=kl.data.copy(),
            per_token_feat=per_feat,
            per_token_attn=per_attn,
            per_token_total=token_losses.data.copy(),
            weighted_total=total.item(),
            total=total,
            token_losses=token_losses,
            student_logits=student_logits,
        )
