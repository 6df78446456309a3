"""Training loops: teacher pretraining, SFT, EGAD distillation and the uniform-KD arm."""
import math
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from app.core import autodiff as ad
from app.core.exceptions import ConfigError, InputError
from app.schemas.config import ModelConfig, Reduction, TrainConfig
from app.schemas.corpus import PAD_ID
from app.schemas.entropy import CurriculumClock, EntropyProfile
from app.schemas.loss import FeatureProjection, LossBreakdown
from app.schemas.metrics import EvalSummary, MetricsRecord, TrainingLogRecord
from app.schemas.model import ForwardTrace, ParameterSet
from app.schemas.training import OptimizerState, RunArtifacts
from app.services.base_service import BaseService
from app.services.diagnostics_service import DiagnosticsService
from app.services.entropy_service import EntropyService, switch_step
from app.services.loss_service import LossService
from app.services.optimizer_service import OptimizerService
from app.services.transformer_service import TransformerService, midpoint_layer

PROJECTION_NAME = "projection.matrix"

CorpusLike = Union[np.ndarray, Sequence[Sequence[int]]]
StepCallback = Callable[[object], None]


def as_token_matrix(corpus: CorpusLike) -> np.ndarray:
    """Sequences as a right-padded int64 matrix [n, S]."""
    if isinstance(corpus, np.ndarray) and corpus.ndim == 2:
        return corpus.astype(np.int64, copy=False)
    rows = [np.asarray(seq, dtype=np.int64).reshape(-1) for seq in corpus]
    if not rows:
        return np.zeros((0, 0), dtype=np.int64)
    width = max(row.size for row in rows)
    out = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    for i, row in enumerate(rows):
        out[i, : row.size] = row
    return out


def total_steps(n_sequences: int, train_config: TrainConfig) -> int:
    """epochs x batches per epoch, capped by max_steps."""
    per_epoch = math.ceil(n_sequences / train_config.batch_size) if n_sequences else 0
    total = train_config.epochs * per_epoch
    if train_config.max_steps is not None:
        total = min(total, train_config.max_steps)
    return total


def iterate_batches(
    n_sequences: int, train_config: TrainConfig, rng: np.random.Generator
) -> Iterator[Tuple[int, int, np.ndarray]]:
    """Yield (step, epoch, indices) with a fresh permutation each epoch."""
    limit = total_steps(n_sequences, train_config)
    step = 0
    for epoch in range(train_config.epochs):
        order = rng.permutation(n_sequences)
        for start in range(0, n_sequences, train_config.batch_size):
            if step >= limit:
                return
            yield step, epoch, order[start:start + train_config.batch_size]
            step += 1


@dataclass
class TeacherOutputs:
    """Frozen teacher quantities for a batch, flattened over [batch * position]."""

    logits: np.ndarray
    hidden: np.ndarray
    attention: np.ndarray


class TrainerService(BaseService):
    """
    Orchestrates the training arms.

    All randomness derives from ``train_config.seed``: batch order uses the
    seed itself, student init ``seed + 1`` (via the ModelConfig), the feature
    projection ``seed + 2``.
    """

    def __init__(
        self,
        transformer: Optional[TransformerService] = None,
        entropy: Optional[EntropyService] = None,
        losses: Optional[LossService] = None,
        optimizer: Optional[OptimizerService] = None,
        diagnostics: Optional[DiagnosticsService] = None,
        show_progress: bool = False,
    ):
        super().__init__()
        self.transformer = transformer or TransformerService()
        self.entropy = entropy or EntropyService()
        self.losses = losses or LossService()
        self.optimizer = optimizer or OptimizerService()
        self.diagnostics = diagnostics or DiagnosticsService()
        self.show_progress = show_progress

    # ------------------------------------------------------------------
    # Supervised arms
    # ------------------------------------------------------------------

    def train_teacher(
        self,
        config: ModelConfig,
        train_config: TrainConfig,
        corpus: CorpusLike,
        on_step: Optional[StepCallback] = None,
    ) -> ParameterSet:
        """
        Pretrain a model by next-token cross-entropy.

        Raises:
            InputError: If the corpus is empty.
        """
        params = self.transformer.init_params(config)
        return self._train_supervised(params, train_config, corpus, "teacher", on_step)

    def train_sft(
        self,
        student_config: ModelConfig,
        train_config: TrainConfig,
        corpus: CorpusLike,
        on_step: Optional[StepCallback] = None,
    ) -> ParameterSet:
        """Student trained on the hard labels only (no teacher)."""
        params = self.transformer.init_params(student_config)
        return self._train_supervised(params, train_config, corpus, "sft", on_step)

    def _train_supervised(
        self,
        params: ParameterSet,
        train_config: TrainConfig,
        corpus: CorpusLike,
        label: str,
        on_step: Optional[StepCallback],
    ) -> ParameterSet:
        tokens = self._require_corpus(corpus)
        if tokens.shape[1] < 2:
            raise InputError(message="sequences need at least two tokens", details={"field": "corpus"})
        steps = total_steps(tokens.shape[0], train_config)
        self._log_operation(f"train_{label}", sequences=tokens.shape[0], steps=steps, seed=train_config.seed)
        rng = np.random.default_rng(train_config.seed)
        state = OptimizerState.zeros_like(params.tensors)
        epoch_losses: List[float] = []
        current_epoch = 0

        with tqdm(total=steps, desc=label, disable=not self.show_progress, leave=False) as bar:
            for step, epoch, idx in iterate_batches(tokens.shape[0], train_config, rng):
                if epoch != current_epoch:
                    self._log_epoch(label, current_epoch, {"ce": epoch_losses})
                    current_epoch, epoch_losses = epoch, []
                batch = tokens[idx]
                trace = self.transformer.forward(params, batch[:, :-1], track_grad=True)
                loss = self._next_token_loss(trace.logits, batch)
                if loss is None:
                    self.logger.warning(f"{label} step {step}: batch has no prediction targets, skipped")
                    bar.update(1)
                    continue
                ad.backward(loss)
                grads = self._leaf_grads(trace.leaves)
                tensors, state = self.optimizer.adamw_step(params.tensors, grads, state, train_config)
                params = ParameterSet(config=params.config, tensors=tensors)

                value = loss.item()
                epoch_losses.append(value)
                if on_step is not None:
                    on_step(TrainingLogRecord(step=step, epoch=epoch, ce_loss=value))
                bar.set_postfix(ce=f"{value:.4f}")
                bar.update(1)
        if epoch_losses:
            self._log_epoch(label, current_epoch, {"ce": epoch_losses})
        return params

    def _next_token_loss(self, logits: ad.Tensor, batch: np.ndarray) -> Optional[ad.Tensor]:
        """Mean cross-entropy of logits[:, i] against batch[:, i + 1], padding excluded.

        ``logits`` may cover the inputs batch[:, :-1] or the whole batch.
        """
        n_seq, seq = batch.shape
        width = logits.shape[1]
        positions = (np.arange(n_seq)[:, None] * width + np.arange(seq - 1)[None, :]).reshape(-1)
        targets = batch[:, 1:].reshape(-1)
        keep = targets != PAD_ID
        if not keep.any():
            return None
        vocab = logits.shape[-1]
        rows = ad.embedding(ad.reshape(logits, (-1, vocab)), positions[keep])
        targets = targets[keep]
        return ad.mean(self.losses.cross_entropy(rows, targets))

    def cross_entropy_on(self, params: ParameterSet, corpus: CorpusLike, batch_size: int = 32) -> float:
        """Token-mean next-token cross-entropy over a corpus."""
        tokens = self._require_corpus(corpus)
        total, count = 0.0, 0
        for start in range(0, tokens.shape[0], batch_size):
            batch = tokens[start:start + batch_size]
            targets = batch[:, 1:].reshape(-1)
            valid = np.flatnonzero(targets != PAD_ID)
            if valid.size == 0:
                continue
            logits = self.transformer.logits(params, batch[:, :-1])
            rows = logits.reshape(-1, logits.shape[-1])[valid]
            nll = self.losses.cross_entropy(ad.as_tensor(rows), targets[valid]).data
            total += float(nll.sum())
            count += valid.size
        if count == 0:
            raise InputError(message="corpus has no prediction targets", details={"field": "corpus"})
        return total / count

    # ------------------------------------------------------------------
    # Distillation arms
    # ------------------------------------------------------------------

    def distill_student(
        self,
        teacher: ParameterSet,
        student_config: ModelConfig,
        train_config: TrainConfig,
        corpus: CorpusLike,
        on_step: Optional[StepCallback] = None,
        arm: str = "egad",
        student_init: Optional[ParameterSet] = None,
    ) -> RunArtifacts:
        """
        EGAD distillation of a frozen teacher into a fresh student.

        Per step: teacher forward, entropy profile, student forward, gated
        weighted loss, backward, AdamW on student and projection, one
        MetricsRecord.

        Args:
            teacher: Frozen teacher parameters (never modified).
            student_config: Student architecture and init seed.
            train_config: Hyperparameters and ablation flags.
            corpus: Token sequences.
            on_step: Called with every MetricsRecord as it is produced.
            arm: Label used in logs and artifacts.
            student_init: Start from these parameters instead of a fresh init.

        Raises:
            ConfigError: If the vocabularies or context windows differ.
            InputError: If the corpus is empty.
        """
        self._check_pair(teacher.config, student_config)
        tokens = self._require_corpus(corpus)
        steps = total_steps(tokens.shape[0], train_config)
        t0 = switch_step(steps, train_config.t0_fraction)
        self._log_operation("distill_student", arm=arm, steps=steps, switch_step=t0, seed=train_config.seed)

        student = student_init.copy() if student_init is not None else self.transformer.init_params(student_config)
        projection = FeatureProjection.initialize(
            student_config.d_model, teacher.config.d_model, train_config.seed + 2
        ).matrix.data
        trainable = dict(student.tensors)
        if train_config.use_dual_path:
            trainable[PROJECTION_NAME] = projection
        state = OptimizerState.zeros_like(trainable)

        cache = self._teacher_cache(teacher, tokens, train_config.batch_size) if train_config.teacher_cache else None
        rng = np.random.default_rng(train_config.seed)
        records: List[MetricsRecord] = []
        epoch_cosines: List[Tuple[int, Optional[float], Optional[float]]] = []
        cos_acc = _CosineAccumulator()
        current_epoch = 0

        with tqdm(total=steps, desc=arm, disable=not self.show_progress, leave=False) as bar:
            for step, epoch, idx in iterate_batches(tokens.shape[0], train_config, rng):
                if epoch != current_epoch:
                    epoch_cosines.append((current_epoch, *cos_acc.result()))
                    self._log_distill_epoch(arm, current_epoch, records)
                    current_epoch, cos_acc = epoch, _CosineAccumulator()

                batch = tokens[idx]
                outputs = self._gather_cache(cache, idx) if cache is not None else self.teacher_outputs(teacher, batch)
                record, grads, n_deep = self._distill_step(
                    student, projection, outputs, batch, step, epoch, t0, train_config
                )
                cos_acc.add(record.feature_cosine, record.attention_cosine, n_deep)

                trainable = dict(student.tensors)
                if train_config.use_dual_path:
                    trainable[PROJECTION_NAME] = projection
                updated, state = self.optimizer.adamw_step(trainable, grads, state, train_config)
                projection = updated.pop(PROJECTION_NAME, projection)
                student = ParameterSet(config=student.config, tensors=updated)

                records.append(record)
                if on_step is not None:
                    on_step(record)
                bar.set_postfix(kl=f"{record.mean_kl:.4f}")
                bar.update(1)

        if records:
            epoch_cosines.append((current_epoch, *cos_acc.result()))
            self._log_distill_epoch(arm, current_epoch, records)
        return RunArtifacts(
            student=student,
            metrics=records,
            projection=projection,
            optimizer_state=state,
            arm=arm,
            epoch_cosines=epoch_cosines,
        )

    def baseline_kd(
        self,
        teacher: ParameterSet,
        student_config: ModelConfig,
        train_config: TrainConfig,
        corpus: CorpusLike,
        on_step: Optional[StepCallback] = None,
    ) -> RunArtifacts:
        """Uniform KD: weights 1, T = 1, logits only; same loop as distill_student."""
        return self.distill_student(
            teacher, student_config, train_config.as_baseline(), corpus, on_step=on_step, arm="kd"
        )

    def teacher_outputs(self, teacher: ParameterSet, batch: np.ndarray) -> TeacherOutputs:
        """Teacher logits, midpoint hidden states and attention rows, no graph."""
        trace = self.transformer.forward(teacher, batch)
        mid = midpoint_layer(teacher.config)
        vocab, width = teacher.config.vocab_size, teacher.config.d_model
        seq = batch.shape[1]
        attn = np.swapaxes(trace.attention[mid].data, 1, 2)  # [B, S, H, S]
        return TeacherOutputs(
            logits=trace.logits.data.reshape(-1, vocab),
            hidden=trace.hidden[mid].data.reshape(-1, width),
            attention=attn.reshape(-1, teacher.config.n_heads, seq),
        )

    def _teacher_cache(self, teacher: ParameterSet, tokens: np.ndarray, batch_size: int) -> TeacherOutputs:
        self.logger.info(f"Precomputing teacher outputs for {tokens.shape[0]} sequences")
        parts = [self.teacher_outputs(teacher, tokens[s:s + batch_size]) for s in range(0, tokens.shape[0], batch_size)]
        seq = tokens.shape[1]
        return TeacherOutputs(
            logits=np.concatenate([p.logits for p in parts]).reshape(tokens.shape[0], seq, -1),
            hidden=np.concatenate([p.hidden for p in parts]).reshape(tokens.shape[0], seq, -1),
            attention=np.concatenate([p.attention for p in parts]).reshape(
                tokens.shape[0], seq, teacher.config.n_heads, seq
            ),
        )

    @staticmethod
    def _gather_cache(cache: TeacherOutputs, idx: np.ndarray) -> TeacherOutputs:
        logits, hidden, attention = cache.logits[idx], cache.hidden[idx], cache.attention[idx]
        return TeacherOutputs(
            logits=logits.reshape(-1, logits.shape[-1]),
            hidden=hidden.reshape(-1, hidden.shape[-1]),
            attention=attention.reshape(-1, *attention.shape[-2:]),
        )

    def _distill_step(
        self,
        student: ParameterSet,
        projection: np.ndarray,
        teacher: TeacherOutputs,
        batch: np.ndarray,
        step: int,
        epoch: int,
        t0: int,
        train_config: TrainConfig,
    ) -> Tuple[MetricsRecord, Dict[str, np.ndarray], int]:
        graph = self._objective_graph(
            student, projection, teacher, batch, CurriculumClock(step=step, switch_step=t0), train_config
        )
        profile, breakdown = graph.profile, graph.breakdown
        s_logits = graph.student_logits
        objective = breakdown.total
        ce_value = None
        if train_config.alpha_ce > 0:
            ce = self._next_token_loss(graph.trace.logits, batch)
            if ce is not None:
                ce_value = ce.item()
                objective = ad.add(objective, ad.scale(ce, train_config.alpha_ce))

        grad_map = ad.backward(objective)
        grads = self._leaf_grads(graph.trace.leaves)
        if train_config.use_dual_path:
            matrix = graph.projection.matrix
            grads[PROJECTION_NAME] = matrix.grad if matrix.grad is not None else np.zeros_like(projection)

        n = profile.size
        logit_grads = grad_map.get(s_logits.id, np.zeros_like(s_logits.data))
        if Reduction(train_config.reduction) == Reduction.MEAN:
            logit_grads = logit_grads * n
        lhs, rhs = self.diagnostics.weighted_gradient_bound(logit_grads / profile.weights[:, None], profile.weights)

        n_deep = int(graph.deep_flat.size)
        feature_cos = attention_cos = None
        if n_deep:
            feature_cos = self.diagnostics.cosine_rows(graph.teacher_features, graph.student_features.data @ projection)
            attention_cos = self.diagnostics.cosine_rows(
                graph.teacher_attention.mean(axis=1), graph.student_attention.data.mean(axis=1)
            )

        record = MetricsRecord(
            step=step,
            epoch=epoch,
            mean_kl=float(np.mean(self.losses.kl_from_logits(graph.teacher_logits, s_logits.data))),
            weighted_total=float(objective.item()),
            feat_loss=float(breakdown.per_token_feat[profile.deep_index].mean()) if n_deep else 0.0,
            attn_loss=float(breakdown.per_token_attn[profile.deep_index].mean()) if n_deep else 0.0,
            mean_entropy=float(profile.entropies.mean()),
            weight_entropy_corr=self.diagnostics.weight_entropy_correlation(profile.weights, profile.entropies),
            deep_fraction=profile.deep_fraction,
            grad_variance=self.diagnostics.grad_variance(logit_grads),
            temperature_mean=float(profile.temperatures.mean()),
            threshold=profile.threshold if math.isfinite(profile.threshold) else None,
            ce_loss=ce_value,
            feature_cosine=feature_cos,
            attention_cosine=attention_cos,
            weighted_grad_sq_sum=rhs,
            total_grad_sq=lhs,
        )
        return record, grads, n_deep

    def _objective_graph(
        self,
        student: ParameterSet,
        projection: np.ndarray,
        teacher: TeacherOutputs,
        batch: np.ndarray,
        clock: CurriculumClock,
        train_config: TrainConfig,
    ) -> "_ObjectiveGraph":
        """Student forward plus the gated objective over the valid tokens of a batch."""
        config = student.config
        valid = np.flatnonzero(batch.reshape(-1) != PAD_ID)
        t_logits = teacher.logits[valid]

        entropies = self.entropy.entropy_from_logits(t_logits)
        profile = self.entropy.profile(entropies, clock, train_config)

        trace = self.transformer.forward(student, batch, track_grad=True)
        flat_logits = ad.reshape(trace.logits, (-1, config.vocab_size))
        s_logits = ad.embedding(flat_logits, valid)

        deep_flat = valid[profile.deep_index]
        proj = FeatureProjection.from_array(projection)
        phi_t = phi_s = attn_t = attn_s = None
        if deep_flat.size:
            mid = midpoint_layer(config)
            seq = batch.shape[1]
            phi_s = ad.embedding(ad.reshape(trace.hidden[mid], (-1, config.d_model)), deep_flat)
            attn_rows = ad.reshape(ad.transpose(trace.attention[mid], 1, 2), (-1, config.n_heads, seq))
            attn_s = ad.embedding(attn_rows, deep_flat)
            phi_t = teacher.hidden[deep_flat]
            attn_t = teacher.attention[deep_flat]

        breakdown = self.losses.egad_objective(
            t_logits, s_logits, profile, train_config,
            teacher_features=phi_t, student_features=phi_s,
            teacher_attention=attn_t, student_attention=attn_s,
            projection=proj if deep_flat.size else None,
        )
        return _ObjectiveGraph(
            trace=trace,
            teacher_logits=t_logits,
            student_logits=s_logits,
            profile=profile,
            breakdown=breakdown,
            projection=proj,
            deep_flat=deep_flat,
            teacher_features=phi_t,
            student_features=phi_s,
            teacher_attention=attn_t,
            student_attention=attn_s,
        )

    def parameter_grad_variance(
        self,
        teacher: ParameterSet,
        student: ParameterSet,
        train_config: TrainConfig,
        batch: CorpusLike,
        clock: Optional[CurriculumClock] = None,
        max_tokens: int = 64,
    ) -> float:
        """
        Per-token gradient variance over every student parameter.

        One backward pass per token, so this is meant for micro-batches;
        the per-step metric uses the logit-level proxy instead. Each token
        contributes w_i * L_i; the projection is left out.

        Args:
            teacher: Frozen teacher.
            student: Student to differentiate.
            train_config: Weighting, temperature and gating flags.
            batch: A few sequences.
            clock: Curriculum position (late phase by default).
            max_tokens: Only the first ``max_tokens`` valid tokens are used.

        Raises:
            InputError: If the batch has fewer than one valid token.
        """
        self._check_pair(teacher.config, student.config)
        tokens = self._require_corpus(batch)
        clock = clock or CurriculumClock(step=1, switch_step=1)
        projection = FeatureProjection.initialize(
            student.config.d_model, teacher.config.d_model, train_config.seed + 2
        ).matrix.data
        graph = self._objective_graph(
            student, projection, self.teacher_outputs(teacher, tokens), tokens, clock, train_config
        )
        token_losses = graph.breakdown.token_losses
        weights = graph.profile.weights
        leaves = graph.trace.leaves
        count = min(max_tokens, graph.profile.size)
        self._log_operation("parameter_grad_variance", tokens=count, parameters=student.count)

        per_token = []
        for i in range(count):
            root = ad.scale(ad.sum(ad.embedding(token_losses, [i])), float(weights[i]))
            grad_map = ad.backward(root)
            per_token.append(np.concatenate([
                grad_map.get(leaf.id, np.zeros_like(leaf.data)).reshape(-1) for leaf in leaves.values()
            ]))
        return self.diagnostics.grad_variance(per_token)

    # ------------------------------------------------------------------
    # Evaluation
    # ------------------------------------------------------------------

    def evaluate_student(
        self,
        student: ParameterSet,
        teacher: ParameterSet,
        heldout: CorpusLike,
        batch_size: int = 32,
    ) -> EvalSummary:
        """
        Mean KL(teacher||student), student perplexity and greedy-match rate.

        Aggregates are token sums, so the result does not depend on how the
        held-out set is batched.

        Raises:
            InputError: If the held-out set has no tokens.
        """
        self._check_pair(teacher.config, student.config)
        tokens = as_token_matrix(heldout)
        if tokens.size == 0 or not np.any(tokens != PAD_ID):
            raise InputError(message="held-out set is empty", details={"field": "heldout"})

        kl_sum = disc_sum = nll_sum = 0.0
        matches = n_tokens = n_targets = 0
        for start in range(0, tokens.shape[0], batch_size):
            batch = tokens[start:start + batch_size]
            valid = np.flatnonzero(batch.reshape(-1) != PAD_ID)
            zt = self.transformer.logits(teacher, batch).reshape(-1, teacher.config.vocab_size)[valid]
            zs_all = self.transformer.logits(student, batch)
            zs = zs_all.reshape(-1, student.config.vocab_size)[valid]
            kl_sum += float(self.losses.kl_from_logits(zt, zs).sum())
            disc_sum += self.diagnostics.output_discrepancy(zt, zs) * valid.size
            matches += int(np.sum(np.argmax(zt, axis=-1) == np.argmax(zs, axis=-1)))
            n_tokens += valid.size

            targets = batch[:, 1:].reshape(-1)
            has_target = np.flatnonzero(targets != PAD_ID)
            if has_target.size:
                rows = zs_all[:, :-1].reshape(-1, student.config.vocab_size)[has_target]
                nll = self.losses.cross_entropy(ad.as_tensor(rows), targets[has_target]).data
                nll_sum += float(nll.sum())
                n_targets += has_target.size

        perplexity = math.exp(nll_sum / n_targets) if n_targets else float(student.config.vocab_size)
        return EvalSummary(
            mean_kl=kl_sum / n_tokens,
            perplexity=perplexity,
            greedy_match=matches / n_tokens,
            output_discrepancy=disc_sum / n_tokens,
            tokens=n_tokens,
        )

    # ------------------------------------------------------------------
    # Helpers
    # ------------------------------------------------------------------

    @staticmethod
    def _require_corpus(corpus: CorpusLike) -> np.ndarray:
        tokens = as_token_matrix(corpus)
        if tokens.shape[0] == 0 or not np.any(tokens != PAD_ID):
            raise InputError(message="corpus is empty", details={"field": "corpus"})
        return tokens

    @staticmethod
    def _check_pair(teacher: ModelConfig, student: ModelConfig) -> None:
        if teacher.vocab_size != student.vocab_size:
            raise ConfigError(
                message="teacher and student vocabularies differ",
                details={"key": "student.vocab_size", "teacher": teacher.vocab_size, "student": student.vocab_size}
            )
        if teacher.max_seq_len != student.max_seq_len:
            raise ConfigError(
                message="teacher and student context windows differ",
                details={"key": "student.max_seq_len", "teacher": teacher.max_seq_len, "student": student.max_seq_len}
            )

    @staticmethod
    def _leaf_grads(leaves: Dict[str, ad.Tensor]) -> Dict[str, np.ndarray]:
        return {
            name: leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
            for name, leaf in leaves.items()
        }

    def _log_epoch(self, label: str, epoch: int, series: Dict[str, List[float]]) -> None:
        summary = ", ".join(f"{k}={np.mean(v):.4f}" for k, v in series.items() if v)
        self.logger.info(f"[{label}] epoch {epoch + 1}: {summary}")

    def _log_distill_epoch(self, arm: str, epoch: int, records: List[MetricsRecord]) -> None:
        epoch_records = [r for r in records if r.epoch == epoch]
        if not epoch_records:
            return
        self._log_epoch(arm, epoch, {
            "loss": [r.weighted_total for r in epoch_records],
            "mean_kl": [r.mean_kl for r in epoch_records],
            "grad_var": [r.grad_variance for r in epoch_records],
        })


@dataclass
class _ObjectiveGraph:
    """Live graph of one gated objective evaluation."""

    trace: ForwardTrace
    teacher_logits: np.ndarray
    student_logits: ad.Tensor
    profile: EntropyProfile
    breakdown: LossBreakdown
    projection: FeatureProjection
    deep_flat: np.ndarray
    teacher_features: Optional[np.ndarray]
    student_features: Optional[ad.Tensor]
    teacher_attention: Optional[np.ndarray]
    student_attention: Optional[ad.Tensor]


class _CosineAccumulator:
    """Token-weighted running mean of per-step cosines over one epoch."""

    def __init__(self):
        self.feat = 0.0
        self.attn = 0.0
        self.tokens = 0

    def add(self, feat: Optional[float], attn: Optional[float], n_tokens: int) -> None:
        if feat is None or attn is None or n_tokens == 0:
            return
        self.feat += feat * n_tokens
        self.attn += attn * n_tokens
        self.tokens += n_tokens

    def result(self) -> Tuple[Optional[float], Optional[float]]:
        if self.tokens == 0:
            return None, None
        return self.feat / self.tokens, self.attn / self.tokens
