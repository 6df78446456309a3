"""Unit tests for BaseService."""
import logging

import numpy as np
import pytest

from app.services.base_service import BaseService

pytestmark = pytest.mark.unit


class TestBaseService:
    """Test cases for BaseService class."""

    def test_init_with_seed(self):
        """Test initialization stores the seed without drawing."""
        service = BaseService(seed=3)

        assert service._seed == 3
        assert service._rng is None

    def test_rng_is_seeded(self):
        """Test two services with one seed draw the same numbers."""
        a = BaseService(seed=11).rng.normal(size=4)
        b = BaseService(seed=11).rng.normal(size=4)

        np.testing.assert_array_equal(a, b)

    def test_rng_is_reused(self):
        """Test the generator is created once."""
        service = BaseService(seed=0)

        assert service.rng is service.rng

    def test_rng_without_seed_raises(self):
        """Test rng raises RuntimeError when no seed was given."""
        service = BaseService()

        with pytest.raises(RuntimeError, match="without a seed"):
            _ = service.rng

    def test_logger_property(self):
        """Test logger is named after the service module."""
        service = BaseService()

        assert isinstance(service.logger, logging.Logger)
        assert service.logger.name == "app.services.base_service"


class TestLogOperation:
    """Tests for _log_operation method."""

    def test_log_operation_with_params(self, caplog):
        """Test parameters are rendered and None values skipped."""
        service = BaseService()

        with caplog.at_level(logging.DEBUG, logger="app.services.base_service"):
            service._log_operation("distill", steps=10, arm=None)

        assert "Starting distill (steps=10)" in caplog.text

    def test_log_operation_without_params(self, caplog):
        """Test a bare operation name is logged."""
        service = BaseService()

        with caplog.at_level(logging.DEBUG, logger="app.services.base_service"):
            service._log_operation("init_params")

        assert "Starting init_params" in caplog.text
