"""Finite-difference validation of every autodiff primitive and loss term."""
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from app.core import autodiff as ad
from app.schemas.config import ModelConfig, TrainConfig
from app.schemas.entropy import CurriculumClock
from app.schemas.loss import FeatureProjection
from app.schemas.metrics import GradcheckEntry, GradcheckReport
from app.services.base_service import BaseService
from app.services.entropy_service import EntropyService
from app.services.loss_service import LossService
from app.services.oracle_service import OracleService
from app.services.transformer_service import TransformerService, midpoint_layer

FD_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-5
TEMPERED_KL_TOLERANCE = 1e-6

# Builds a scalar from a list of leaf tensors
GraphFn = Callable[[List[ad.Tensor]], ad.Tensor]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||, 1e-8)."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-8)
    return float(np.linalg.norm(a - n)) / scale


class GradcheckService(BaseService):
    """Compares backward() against central differences on seeded random inputs."""

    def __init__(self, seed: int = 0, cases: int = 5, step: float = FD_STEP):
        super().__init__(seed=seed)
        self.cases = cases
        self.step = step
        self.oracle = OracleService()
        self.losses = LossService()

    def check(self, fn: GraphFn, inputs: List[np.ndarray]) -> float:
        """Max relative error over all inputs of one scalar graph."""
        leaves = [ad.parameter(x.copy()) for x in inputs]
        ad.backward(fn(leaves))
        worst = 0.0
        for i, leaf in enumerate(leaves):
            def scalar(x: np.ndarray, i: int = i) -> float:
                args = [ad.as_tensor(v) for v in inputs]
                args[i] = ad.as_tensor(x)
                return fn(args).item()

            numeric = self.oracle.finite_difference_grad(scalar, inputs[i], self.step)
            analytic = leaf.grad if leaf.grad is not None else np.zeros_like(inputs[i])
            worst = max(worst, relative_error(analytic, numeric))
        return worst

    def primitive_cases(self) -> Dict[str, Tuple[GraphFn, Callable[[], List[np.ndarray]]]]:
        """name -> (scalar graph, input sampler); inputs have magnitude <= 10."""
        rng = self.rng
        u = lambda *shape: rng.uniform(-10.0, 10.0, size=shape)
        away = lambda *shape: rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.1, 10.0, size=shape)
        positive = lambda *shape: rng.uniform(0.5, 10.0, size=shape)
        small = lambda *shape: rng.uniform(-2.0, 2.0, size=shape)

        def weighted(shape):
            w = rng.normal(size=shape)
            return lambda out: ad.sum(ad.mul(out, w))

        r34 = weighted((3, 4))
        r43 = weighted((4, 3))
        r43_rows = weighted((4, 3))
        r52 = weighted((5, 2))
        r12 = weighted((12,))
        r35 = weighted((3, 5))
        r38 = weighted((3, 8))
        r234 = weighted((2, 3, 4))
        r23 = weighted((2, 3))
        r_col = weighted((3, 2))
        mask = np.triu(np.ones((3, 4), dtype=bool), k=1)
        ids = np.array([0, 2, 2, 4])
        scatter_index = np.array([4, 0, 2])

        return {
            "add": (lambda t: r34(ad.add(t[0], t[1])), lambda: [u(3, 4), u(3, 4)]),
            "add_broadcast": (lambda t: r34(ad.add(t[0], t[1])), lambda: [u(3, 4), u(4)]),
            "sub": (lambda t: r34(ad.sub(t[0], t[1])), lambda: [u(3, 4), u(3, 4)]),
            "mul": (lambda t: r34(ad.mul(t[0], t[1])), lambda: [u(3, 4), u(3, 4)]),
            "scale": (lambda t: r34(ad.scale(t[0], -1.7)), lambda: [u(3, 4)]),
            "neg": (lambda t: r34(ad.neg(t[0])), lambda: [u(3, 4)]),
            "exp": (lambda t: r34(ad.exp(t[0])), lambda: [u(3, 4)]),
            "log": (lambda t: r34(ad.log(t[0])), lambda: [positive(3, 4)]),
            "relu": (lambda t: r34(ad.relu(t[0])), lambda: [away(3, 4)]),
            "gelu": (lambda t: r34(ad.gelu(t[0])), lambda: [u(3, 4)]),
            "sum_rows": (lambda t: r_col(ad.concat([ad.sum_rows(t[0]), ad.sum_rows(t[0])], axis=-1)), lambda: [u(3, 4)]),
            "mean": (lambda t: ad.mean(ad.mul(t[0], t[0])), lambda: [u(3, 4)]),
            "transpose": (lambda t: r43(ad.transpose(t[0])), lambda: [u(3, 4)]),
            "reshape": (lambda t: r12(ad.reshape(t[0], (12,))), lambda: [u(3, 4)]),
            "matmul": (lambda t: r35(ad.matmul(t[0], t[1])), lambda: [u(3, 4), u(4, 5)]),
            "matmul_batched": (
                lambda t: r23(ad.sum(ad.matmul(t[0], t[1]), axis=-1)),
                lambda: [u(2, 3, 4), u(2, 4, 5)],
            ),
            "embedding": (lambda t: r43_rows(ad.embedding(t[0], ids)), lambda: [u(5, 3)]),
            "scatter_rows": (lambda t: r52(ad.scatter_rows(t[0], scatter_index, 5)), lambda: [u(3, 2)]),
            "layer_norm": (lambda t: r34(ad.layer_norm(t[0], t[1], t[2])), lambda: [u(3, 4), u(4), u(4)]),
            "masked_fill": (lambda t: r34(ad.masked_fill(t[0], mask, 0.0)), lambda: [u(3, 4)]),
            "concat": (lambda t: r38(ad.concat([t[0], t[1]], axis=-1)), lambda: [u(3, 4), u(3, 4)]),
            "split": (lambda t: r_col(ad.split(t[0], 2)[1]), lambda: [u(3, 4)]),
            "stack": (lambda t: r234(ad.stack([t[0], t[1]], axis=0)), lambda: [u(3, 4), u(3, 4)]),
            "softmax_rows": (lambda t: r34(ad.softmax_rows(t[0], 2.5)), lambda: [u(3, 4)]),
            "log_softmax_rows": (lambda t: r34(ad.log_softmax_rows(t[0], 0.7)), lambda: [small(3, 4)]),
            "softmax_rows_per_row_t": (
                lambda t: r34(ad.softmax_rows(t[0], np.array([1.0, 3.0, 5.0]))),
                lambda: [u(3, 4)],
            ),
        }

    def loss_cases(self) -> Dict[str, Tuple[GraphFn, Callable[[], List[np.ndarray]], float]]:
        rng = self.rng
        losses = self.losses
        cases: Dict[str, Tuple[GraphFn, Callable[[], List[np.ndarray]], float]] = {}

        for temperature in (1.0, 3.0, 5.0):
            z_t = rng.uniform(-5.0, 5.0, size=(3, 6))
            cases[f"tempered_kl_T{temperature:g}"] = (
                lambda t, z_t=z_t, temperature=temperature: ad.sum(losses.tempered_kl(z_t, t[0], temperature)),
                lambda: [rng.uniform(-5.0, 5.0, size=(3, 6))],
                TEMPERED_KL_TOLERANCE,
            )

        phi_t = rng.normal(size=(3, 6))
        cases["feature_loss"] = (
            lambda t: ad.sum(losses.feature_loss(phi_t, t[0], FeatureProjection(matrix=t[1]))),
            lambda: [rng.normal(size=(3, 4)), rng.normal(size=(4, 6))],
            DEFAULT_TOLERANCE,
        )

        attn_t = rng.dirichlet(np.ones(5), size=(3, 2))
        cases["attention_loss"] = (
            lambda t: ad.sum(losses.attention_loss(attn_t, ad.softmax_rows(t[0]))),
            lambda: [rng.normal(size=(3, 4, 5))],
            DEFAULT_TOLERANCE,
        )
        return cases

    def egad_objective_error(self, n_coordinates: int = 24) -> float:
        """Gradient of the full per-step objective w.r.t. a sample of student coordinates."""
        rng = self.rng
        transformer = TransformerService()
        entropy = EntropyService()
        vocab, seq = 7, 6
        teacher = transformer.init_params(ModelConfig(
            vocab_size=vocab, d_model=8, n_layers=2, n_heads=2, d_ff=16, max_seq_len=seq, seed=11,
        ))
        student = transformer.init_params(ModelConfig(
            vocab_size=vocab, d_model=4, n_layers=2, n_heads=2, d_ff=8, max_seq_len=seq, seed=12,
        ))
        # Larger init so the objective has curvature well above rounding noise
        student.tensors = {k: v * 10.0 if v.std() > 0 else v for k, v in student.tensors.items()}
        projection = rng.normal(0.0, 0.5, size=(4, 8))
        batch = rng.integers(1, vocab, size=(2, seq))
        config = TrainConfig(quantile=1.0 / 3.0)

        t_trace = transformer.forward(teacher, batch)
        t_mid = midpoint_layer(teacher.config)
        t_logits = t_trace.logits.data.reshape(-1, vocab)
        t_hidden = t_trace.hidden[t_mid].data.reshape(-1, 8)
        t_attn = np.swapaxes(t_trace.attention[t_mid].data, 1, 2).reshape(-1, 2, seq)
        profile = entropy.profile(
            entropy.entropy_from_logits(t_logits), CurriculumClock(step=0, switch_step=1), config
        )
        deep = profile.deep_index

        def objective(params: Dict[str, np.ndarray], proj: ad.Tensor, track: bool) -> Tuple[ad.Tensor, Dict]:
            student.tensors = params
            s_trace = transformer.forward(student, batch, track_grad=track)
            s_mid = midpoint_layer(student.config)
            s_logits = ad.reshape(s_trace.logits, (-1, vocab))
            phi_s = ad.embedding(ad.reshape(s_trace.hidden[s_mid], (-1, 4)), deep)
            attn_s = ad.embedding(ad.reshape(ad.transpose(s_trace.attention[s_mid], 1, 2), (-1, 2, seq)), deep)
            breakdown = self.losses.egad_objective(
                t_logits, s_logits, profile, config,
                teacher_features=t_hidden[deep], student_features=phi_s,
                teacher_attention=t_attn[deep], student_attention=attn_s,
                projection=FeatureProjection(matrix=proj),
            )
            return breakdown.total, s_trace.leaves

        base = {k: v.copy() for k, v in student.tensors.items()}
        proj_leaf = ad.parameter(projection.copy())
        total, leaves = objective(base, proj_leaf, track=True)
        ad.backward(total)
        analytic_full = {name: leaf.grad for name, leaf in leaves.items()}
        analytic_full["projection"] = proj_leaf.grad

        names = sorted(analytic_full)
        picks = []
        for _ in range(n_coordinates):
            name = names[int(rng.integers(len(names)))]
            shape = projection.shape if name == "projection" else base[name].shape
            picks.append((name, tuple(int(rng.integers(s)) for s in shape)))

        analytic, numeric = [], []
        for name, index in picks:
            def scalar(value: float) -> float:
                params = {k: v.copy() for k, v in base.items()}
                proj = projection.copy()
                target = proj if name == "projection" else params[name]
                target[index] = value
                return objective(params, ad.as_tensor(proj), track=False)[0].item()

            origin = projection[index] if name == "projection" else base[name][index]
            numeric.append(
                (scalar(origin + self.step) - scalar(origin - self.step)) / (2.0 * self.step)
            )
            grad = analytic_full[name]
            analytic.append(0.0 if grad is None else grad[index])
        student.tensors = base
        return relative_error(np.array(analytic), np.array(numeric))

    def run(self, include_objective: bool = True) -> GradcheckReport:
        """Run every check; the report lists each primitive with its max relative error."""
        self._log_operation("gradcheck", cases=self.cases, step=self.step)
        report = GradcheckReport(step_size=self.step)
        for name, (fn, sampler) in self.primitive_cases().items():
            worst = max(self.check(fn, sampler()) for _ in range(self.cases))
            report.entries.append(self._entry(name, worst, DEFAULT_TOLERANCE))
        for name, (fn, sampler, tolerance) in self.loss_cases().items():
            worst = max(self.check(fn, sampler()) for _ in range(self.cases))
            report.entries.append(self._entry(name, worst, tolerance))
        if include_objective:
            report.entries.append(self._entry("egad_objective", self.egad_objective_error(), DEFAULT_TOLERANCE))
        failed = report.failures
        if failed:
            self.logger.warning(f"Gradient check failures: {', '.join(failed)}")
        else:
            self.logger.info(f"Gradient check passed for {len(report.entries)} entries")
        return report

    def _entry(self, name: str, worst: float, tolerance: float, cases: Optional[int] = None) -> GradcheckEntry:
        self.logger.debug(f"gradcheck {name}: max relative error {worst:.3e}")
        return GradcheckEntry(
            name=name,
            cases=cases or self.cases,
            max_rel_error=worst,
            tolerance=tolerance,
            passed=worst <= tolerance,
        )
