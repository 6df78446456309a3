"""Unit tests for the shared command dependencies."""
import pytest

from app.commands.common import (
    RunContext,
    get_corpus_service,
    get_diagnostics_service,
    get_trainer_service,
)
from app.schemas.config import RunConfig
from app.services.corpus_service import CorpusService
from app.services.diagnostics_service import DiagnosticsService
from app.services.trainer_service import TrainerService

pytestmark = pytest.mark.unit


class TestDependencies:
    """Tests for the get_*_service factories."""

    def test_trainer_is_quiet_when_asked(self):
        """Test --quiet turns the progress bar off."""
        trainer = get_trainer_service(RunContext(config=RunConfig(), quiet=True))

        assert isinstance(trainer, TrainerService)
        assert trainer.show_progress is False

    def test_fresh_instances(self):
        """Test each call builds a new service."""
        assert isinstance(get_corpus_service(), CorpusService)
        assert isinstance(get_diagnostics_service(), DiagnosticsService)
        assert get_corpus_service() is not get_corpus_service()
