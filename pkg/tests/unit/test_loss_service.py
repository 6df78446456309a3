"""Unit tests for LossService."""
import math

import numpy as np
import pytest

from app.core import autodiff as ad
from app.core.exceptions import DimensionError, DomainError, InputError
from app.schemas.config import Reduction, TrainConfig
from app.schemas.entropy import EntropyProfile
from app.schemas.loss import FeatureProjection

pytestmark = pytest.mark.unit


class TestKlDivergence:
    """Tests for kl_divergence."""

    def test_identical(self, loss_service):
        """Test identical distributions give 0."""
        assert loss_service.kl_divergence([0.3, 0.7], [0.3, 0.7]) == 0.0

    def test_one_hot_against_uniform(self, loss_service):
        """Test [1,0] vs [0.5,0.5] gives ln 2."""
        assert loss_service.kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-12)

    def test_against_oracle(self, loss_service, oracle):
        """Test [0.5,0.5] vs [0.9,0.1] matches the oracle."""
        _, expected = oracle.reference_entropy_kl([0.5, 0.5], [0.9, 0.1])
        kl = loss_service.kl_divergence([0.5, 0.5], [0.9, 0.1])
        assert kl == pytest.approx(expected, abs=1e-12)
        assert kl == pytest.approx(0.510826, abs=1e-6)

    def test_support_violation_is_infinite(self, loss_service):
        """Test p_t > 0 where p_s = 0 gives +inf instead of raising."""
        kl = loss_service.kl_divergence([[0.5, 0.5], [0.5, 0.5]], [[1.0, 0.0], [0.5, 0.5]])
        assert kl[0] == math.inf
        assert kl[1] == 0.0

    def test_shape_mismatch(self, loss_service):
        """Test differing shapes raise InputError."""
        with pytest.raises(InputError):
            loss_service.kl_divergence([0.5, 0.5], [0.2, 0.3, 0.5])

    def test_from_logits_non_negative(self, loss_service, rng):
        """Test the logit form is non-negative and zero on identical rows."""
        z = rng.normal(size=(5, 7))
        assert np.all(loss_service.kl_from_logits(z, rng.normal(size=(5, 7))) >= 0)
        np.testing.assert_allclose(loss_service.kl_from_logits(z, z), 0.0, atol=1e-15)


class TestTemperedKl:
    """Tests for tempered_kl."""

    def test_identical_logits(self, loss_service):
        """Test identical logits give 0 at any temperature."""
        for t in (0.5, 1.0, 4.0):
            assert loss_service.tempered_kl([1.0, -2.0, 0.5], [1.0, -2.0, 0.5], t).item() == pytest.approx(0.0, abs=1e-15)

    def test_against_oracle(self, loss_service, oracle):
        """Test [2,0] vs [0,0] at T=2 equals ln 2 - H(softmax([1,0]))."""
        _, expected = oracle.reference_entropy_kl([2.0, 0.0], [0.0, 0.0], temperature=2.0)
        value = loss_service.tempered_kl([2.0, 0.0], [0.0, 0.0], 2.0).item()
        assert value == pytest.approx(expected, abs=1e-12)
        assert value == pytest.approx(0.1109441, abs=1e-7)

    def test_decreasing_in_temperature(self, loss_service):
        """Test the value falls toward 0 as T grows."""
        values = [loss_service.tempered_kl([2.0, 0.0], [0.0, 0.0], t).item() for t in (2, 4, 8, 16)]
        assert all(a > b for a, b in zip(values, values[1:]))
        # KL shrinks like 1/T^2 for large T: ~(2/T)^2 / 8
        assert values[-1] < 2.5e-3
        assert values[-1] < values[0] / 50

    def test_closed_form_gradient(self, loss_service, rng):
        """Test d/dz_s equals (softmax(z_s/T) - softmax(z_t/T)) / T."""
        z_t = rng.normal(size=5)
        z_s = ad.parameter(rng.normal(size=5))
        t = 2.5
        ad.backward(loss_service.tempered_kl(z_t, z_s, t))
        expected = (ad.softmax_rows(z_s.data, t).data - ad.softmax_rows(z_t, t).data) / t
        np.testing.assert_allclose(z_s.grad, expected, atol=1e-12)

    def test_per_row_temperatures(self, loss_service):
        """Test each row is softened by its own temperature."""
        z_t = np.array([[2.0, 0.0], [2.0, 0.0]])
        z_s = np.zeros((2, 2))
        rows = loss_service.tempered_kl(z_t, z_s, np.array([1.0, 2.0])).data
        assert rows[0] == pytest.approx(loss_service.tempered_kl([2.0, 0.0], [0.0, 0.0], 1.0).item())
        assert rows[1] == pytest.approx(loss_service.tempered_kl([2.0, 0.0], [0.0, 0.0], 2.0).item())

    def test_t_squared_compensation(self, loss_service):
        """Test compensation multiplies by T^2."""
        plain = loss_service.tempered_kl([2.0, 0.0], [0.0, 0.0], 2.0).item()
        scaled = loss_service.tempered_kl([2.0, 0.0], [0.0, 0.0], 2.0, compensate_t_squared=True).item()
        assert scaled == pytest.approx(4.0 * plain)

    def test_non_positive_temperature(self, loss_service):
        """Test T <= 0 raises DomainError."""
        with pytest.raises(DomainError):
            loss_service.tempered_kl([2.0, 0.0], [0.0, 0.0], 0.0)

    def test_shape_mismatch(self, loss_service):
        """Test differing logit shapes raise DimensionError."""
        with pytest.raises(DimensionError):
            loss_service.tempered_kl([2.0, 0.0], [0.0, 0.0, 0.0], 1.0)


class TestFeatureLoss:
    """Tests for feature_loss."""

    def test_perfect_alignment(self, loss_service):
        """Test phi_t = proj(phi_s) gives 0."""
        proj = FeatureProjection.from_array(np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert loss_service.feature_loss([0.3, -0.4], [0.3, -0.4], proj).item() == 0.0

    def test_normalized_by_teacher_width(self, loss_service):
        """Test [1,0] against a zero projection gives 1/2."""
        proj = FeatureProjection.from_array(np.zeros((3, 2)))
        assert loss_service.feature_loss([1.0, 0.0], [1.0, 2.0, 3.0], proj).item() == pytest.approx(0.5)

    def test_projection_receives_gradient(self, loss_service):
        """Test the projection matrix is trained through the loss."""
        proj = FeatureProjection.from_array(np.zeros((1, 2)))
        ad.backward(ad.sum(loss_service.feature_loss([[1.0, 0.0]], [[2.0]], proj)))
        # d/dW of ||t - xW||^2 / 2 = -(t - xW) x
        np.testing.assert_allclose(proj.matrix.grad, [[-2.0, 0.0]])

    def test_width_mismatch(self, loss_service):
        """Test a student width that disagrees with the projection raises DimensionError."""
        proj = FeatureProjection.from_array(np.zeros((3, 2)))
        with pytest.raises(DimensionError):
            loss_service.feature_loss([1.0, 0.0], [1.0, 2.0], proj)


class TestAttentionLoss:
    """Tests for attention_loss."""

    def test_identical(self, loss_service, rng):
        """Test identical maps give 0."""
        attn = rng.dirichlet(np.ones(4), size=(3, 2))
        np.testing.assert_allclose(loss_service.attention_loss(attn, attn).data, 0.0, atol=1e-15)

    def test_opposite_rows(self, loss_service):
        """Test head-averaged [1,0] vs [0,1] over seq 2 gives 1.0."""
        value = loss_service.attention_loss([[1.0, 0.0]], [[0.0, 1.0]]).item()
        assert value == pytest.approx(1.0)

    def test_head_permutation_invariant(self, loss_service, rng):
        """Test permuting teacher heads leaves the loss unchanged."""
        attn_t = rng.dirichlet(np.ones(5), size=4)
        attn_s = rng.dirichlet(np.ones(5), size=2)
        a = loss_service.attention_loss(attn_t, attn_s).item()
        b = loss_service.attention_loss(attn_t[[2, 0, 3, 1]], attn_s).item()
        assert a == pytest.approx(b, abs=1e-12)

    def test_differing_head_counts(self, loss_service):
        """Test 4 teacher heads against 2 student heads is allowed."""
        value = loss_service.attention_loss(np.full((4, 2), 0.5), np.full((2, 2), 0.5)).item()
        assert value == 0.0

    def test_sequence_length_mismatch(self, loss_service):
        """Test different key lengths raise InputError."""
        with pytest.raises(InputError):
            loss_service.attention_loss(np.full((2, 3), 1 / 3), np.full((2, 2), 0.5))


class TestTokenLoss:
    """Tests for token_loss."""

    def test_shallow(self, loss_service):
        """Test a shallow token keeps only its KL."""
        assert loss_service.token_loss(0.11, 0.2, 0.1, False, 0.5) == pytest.approx(0.11)

    def test_deep(self, loss_service):
        """Test a deep token adds lambda * (feat + attn)."""
        assert loss_service.token_loss(0.11, 0.2, 0.1, True, 0.5) == pytest.approx(0.26)

    def test_zero_lambda(self, loss_service):
        """Test lambda 0 reduces a deep token to its KL."""
        assert loss_service.token_loss(0.11, 0.2, 0.1, True, 0.0) == pytest.approx(0.11)


class TestEgadTotal:
    """Tests for egad_total."""

    def test_unit_weights_mean(self, loss_service):
        """Test unit weights with mean reduction give the arithmetic mean."""
        total = loss_service.egad_total(np.ones(3), np.array([0.1, 0.2, 0.6]), Reduction.MEAN)
        assert total.item() == pytest.approx(0.3)

    def test_weighted_sum(self, loss_service):
        """Test [0.5, 0.880797] . [0.11, 0.26] with sum reduction."""
        total = loss_service.egad_total([0.5, 0.880797], [0.11, 0.26], "sum")
        assert total.item() == pytest.approx(0.284007, abs=1e-6)

    def test_length_mismatch(self, loss_service):
        """Test differing lengths raise InputError."""
        with pytest.raises(InputError):
            loss_service.egad_total([1.0, 1.0], [0.1, 0.2, 0.3])

    def test_empty(self, loss_service):
        """Test zero tokens raise InputError."""
        with pytest.raises(InputError):
            loss_service.egad_total([], [])


class TestCrossEntropy:
    """Tests for cross_entropy."""

    def test_uniform_logits(self, loss_service):
        """Test zero logits give ln V per row."""
        ce = loss_service.cross_entropy(ad.parameter(np.zeros((3, 4))), np.array([0, 1, 3]))
        np.testing.assert_allclose(ce.data, math.log(4))

    def test_gradient(self, loss_service, rng):
        """Test d CE / d logits = softmax - one_hot."""
        logits = ad.parameter(rng.normal(size=(2, 3)))
        ad.backward(ad.sum(loss_service.cross_entropy(logits, np.array([2, 0]))))
        expected = ad.softmax_rows(logits.data).data - np.eye(3)[[2, 0]]
        np.testing.assert_allclose(logits.grad, expected, atol=1e-12)


class TestEgadObjective:
    """Tests for egad_objective."""

    def _profile(self, deep):
        n = len(deep)
        return EntropyProfile(
            entropies=np.linspace(0.1, 1.0, n),
            weights=np.ones(n),
            temperatures=np.full(n, 2.0),
            deep_mask=np.array(deep),
            threshold=0.5,
        )

    def test_shallow_tokens_have_zero_alignment_terms(self, loss_service, rng):
        """Test feature and attention terms are exactly 0 off the deep path."""
        profile = self._profile([False, True, False, True])
        deep = profile.deep_index
        proj = FeatureProjection.initialize(3, 4, seed=0)
        out = loss_service.egad_objective(
            rng.normal(size=(4, 5)),
            ad.parameter(rng.normal(size=(4, 5))),
            profile,
            TrainConfig(lam=0.5),
            teacher_features=rng.normal(size=(deep.size, 4)),
            student_features=ad.parameter(rng.normal(size=(deep.size, 3))),
            teacher_attention=rng.dirichlet(np.ones(6), size=(deep.size, 2)),
            student_attention=ad.parameter(rng.dirichlet(np.ones(6), size=(deep.size, 2))),
            projection=proj,
        )

        assert out.per_token_feat[[0, 2]].tolist() == [0.0, 0.0]
        assert out.per_token_attn[[0, 2]].tolist() == [0.0, 0.0]
        assert np.all(out.per_token_feat[deep] > 0)
        np.testing.assert_allclose(
            out.per_token_total, out.per_token_kl + 0.5 * (out.per_token_feat + out.per_token_attn)
        )
        assert out.weighted_total == pytest.approx(out.per_token_total.mean())

    def test_backward_reaches_student_and_projection(self, loss_service, rng):
        """Test gradients flow into logits, features and the projection."""
        profile = self._profile([True, True])
        proj = FeatureProjection.initialize(3, 4, seed=0)
        logits = ad.parameter(rng.normal(size=(2, 5)))
        features = ad.parameter(rng.normal(size=(2, 3)))
        out = loss_service.egad_objective(
            rng.normal(size=(2, 5)), logits, profile, TrainConfig(),
            teacher_features=rng.normal(size=(2, 4)),
            student_features=features,
            teacher_attention=rng.dirichlet(np.ones(3), size=(2, 2)),
            student_attention=ad.parameter(rng.dirichlet(np.ones(3), size=(2, 2))),
            projection=proj,
        )
        ad.backward(out.total)

        assert np.any(logits.grad != 0)
        assert np.any(features.grad != 0)
        assert np.any(proj.matrix.grad != 0)
