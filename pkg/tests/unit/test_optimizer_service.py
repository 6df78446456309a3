"""Unit tests for OptimizerService."""
import numpy as np
import pytest

from app.core.exceptions import DimensionError
from app.schemas.config import PAPER_LEARNING_RATE, TrainConfig
from app.schemas.training import OptimizerState

pytestmark = pytest.mark.unit


def _step(optimizer_service, theta, grad, config, state=None):
    params = {"w": np.array(theta, dtype=np.float64)}
    state = state or OptimizerState.zeros_like(params)
    return optimizer_service.adamw_step(params, {"w": np.array(grad, dtype=np.float64)}, state, config)


class TestAdamwStep:
    """Tests for adamw_step."""

    def test_first_step_by_hand(self, optimizer_service):
        """Test w=1, g=1, lr=5e-6, wd=1e-2 gives 1 - 5e-6 - 5e-8."""
        config = TrainConfig(learning_rate=PAPER_LEARNING_RATE, weight_decay=1e-2)
        new, state = _step(optimizer_service, [1.0], [1.0], config)

        assert new["w"][0] == pytest.approx(0.99999495, abs=1e-10)
        assert state.step == 1

    def test_zero_gradient_zero_decay(self, optimizer_service):
        """Test nothing moves without gradient or decay."""
        config = TrainConfig(learning_rate=1e-3, weight_decay=0.0)
        new, _ = _step(optimizer_service, [0.5, -2.0], [0.0, 0.0], config)
        np.testing.assert_array_equal(new["w"], [0.5, -2.0])

    def test_zero_gradient_is_pure_shrink(self, optimizer_service):
        """Test decoupled decay alone multiplies by (1 - lr * wd)."""
        config = TrainConfig(learning_rate=1e-2, weight_decay=0.1)
        new, _ = _step(optimizer_service, [2.0, -4.0], [0.0, 0.0], config)
        np.testing.assert_allclose(new["w"], np.array([2.0, -4.0]) * (1 - 1e-3), rtol=1e-15)

    def test_inputs_not_mutated(self, optimizer_service):
        """Test the step returns new arrays and leaves its inputs alone."""
        params = {"w": np.array([1.0])}
        state = OptimizerState.zeros_like(params)
        optimizer_service.adamw_step(params, {"w": np.array([1.0])}, state, TrainConfig())

        assert params["w"][0] == 1.0
        assert state.step == 0 and state.m["w"][0] == 0.0

    def test_matches_reference_bitwise(self, optimizer_service, oracle):
        """Test three steps agree exactly with the scalar recurrence."""
        config = TrainConfig(learning_rate=3e-4, weight_decay=1e-2)
        grads = [0.7, 0.7, -1.3]
        expected = oracle.reference_adamw(1.5, grads, config)

        params = {"w": np.array([1.5])}
        state = OptimizerState.zeros_like(params)
        for g in grads:
            params, state = optimizer_service.adamw_step(params, {"w": np.array([g])}, state, config)

        assert params["w"][0] == expected[-1]

    def test_missing_gradient_counts_as_zero(self, optimizer_service):
        """Test a parameter without a gradient only decays."""
        config = TrainConfig(learning_rate=1e-2, weight_decay=0.0)
        new, _ = optimizer_service.adamw_step({"w": np.ones(2)}, {}, OptimizerState(), config)
        np.testing.assert_array_equal(new["w"], np.ones(2))

    def test_shape_mismatch(self, optimizer_service):
        """Test a gradient of the wrong shape raises DimensionError."""
        with pytest.raises(DimensionError):
            _step(optimizer_service, [1.0, 2.0], [1.0], TrainConfig())

    def test_global_grad_norm(self, optimizer_service):
        """Test the norm spans every gradient array."""
        assert optimizer_service.global_grad_norm({"a": np.array([3.0]), "b": np.array([[4.0]])}) == 5.0
